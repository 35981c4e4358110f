#include "kbqa/literal.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "kbqa/text.hpp"

namespace kbqa {

namespace {

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (unsigned char c : s)
        if (!std::isdigit(c)) return false;
    return true;
}

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> base = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2) {
        bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        return leap ? 29 : 28;
    }
    return base[m - 1];
}

}  // namespace

bool CalendarDate::ok() const {
    return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
}

std::string CalendarDate::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
}

std::optional<CalendarDate> CalendarDate::parse(std::string_view s) {
    std::string t = trim(s);
    if (t.size() != 10 || t[4] != '-' || t[7] != '-') return std::nullopt;
    std::string_view y(t.data(), 4), m(t.data() + 5, 2), d(t.data() + 8, 2);
    if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return std::nullopt;
    CalendarDate out;
    std::from_chars(y.data(), y.data() + y.size(), out.year);
    std::from_chars(m.data(), m.data() + m.size(), out.month);
    std::from_chars(d.data(), d.data() + d.size(), out.day);
    if (!out.ok()) return std::nullopt;
    return out;
}

Literal Literal::str(std::string s) {
    Literal l;
    l.kind = LiteralKind::String;
    l.text = std::move(s);
    return l;
}

Literal Literal::quantity(double value, std::string unit) {
    Literal l;
    l.kind = LiteralKind::Quantity;
    l.number = value;
    l.unit = std::move(unit);
    return l;
}

Literal Literal::of_year(int y) {
    Literal l;
    l.kind = LiteralKind::Year;
    l.year = y;
    return l;
}

Literal Literal::of_date(CalendarDate d) {
    Literal l;
    l.kind = LiteralKind::Date;
    l.date = d;
    return l;
}

std::string Literal::render() const {
    switch (kind) {
        case LiteralKind::String:
            return text;
        case LiteralKind::Quantity: {
            char buf[40];
            if (number == std::floor(number) && std::abs(number) < 1e15)
                std::snprintf(buf, sizeof buf, "%.0f", number);
            else
                std::snprintf(buf, sizeof buf, "%.10g", number);
            std::string out = buf;
            if (!unit.empty()) {
                out.push_back(' ');
                out += unit;
            }
            return out;
        }
        case LiteralKind::Year: {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%d", year);
            return buf;
        }
        case LiteralKind::Date:
            return date.to_string();
    }
    return {};
}

std::optional<Literal> parse_quantity(std::string_view s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    double value = 0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr == begin || !std::isfinite(value)) return std::nullopt;
    std::string unit = trim(std::string_view(ptr, static_cast<size_t>(end - ptr)));
    return Literal::quantity(value, std::move(unit));
}

std::optional<Literal> parse_year(std::string_view s) {
    std::string t = trim(s);
    bool neg = !t.empty() && t[0] == '-';
    std::string_view digits = neg ? std::string_view(t).substr(1) : std::string_view(t);
    if (!all_digits(digits) || digits.size() > 6) return std::nullopt;
    int y = 0;
    std::from_chars(digits.data(), digits.data() + digits.size(), y);
    return Literal::of_year(neg ? -y : y);
}

std::optional<Literal> parse_date(std::string_view s) {
    auto d = CalendarDate::parse(s);
    if (!d) return std::nullopt;
    return Literal::of_date(*d);
}

Literal parse_literal_guess(std::string_view s) {
    if (auto d = parse_date(s)) return *d;
    if (auto y = parse_year(s)) return *y;
    if (auto q = parse_quantity(s)) return *q;
    return Literal::str(trim(s));
}

std::optional<CompareOp> parse_compare_op(std::string_view s) {
    std::string t = trim(s);
    if (t == "=" || t == "==") return CompareOp::Eq;
    if (t == "!=") return CompareOp::Ne;
    if (t == "<") return CompareOp::Lt;
    if (t == ">") return CompareOp::Gt;
    return std::nullopt;
}

const char* compare_op_name(CompareOp op) {
    switch (op) {
        case CompareOp::Eq: return "=";
        case CompareOp::Ne: return "!=";
        case CompareOp::Lt: return "<";
        case CompareOp::Gt: return ">";
    }
    return "?";
}

namespace {

template <typename T>
bool apply_op(const T& a, CompareOp op, const T& b) {
    switch (op) {
        case CompareOp::Eq: return a == b;
        case CompareOp::Ne: return a != b;
        case CompareOp::Lt: return a < b;
        case CompareOp::Gt: return a > b;
    }
    return false;
}

}  // namespace

bool compare_literals(const Literal& stored, CompareOp op, const Literal& query) {
    switch (query.kind) {
        case LiteralKind::String:
            if (stored.kind != LiteralKind::String) return false;
            return apply_op(normalize_label(stored.text), op, normalize_label(query.text));
        case LiteralKind::Quantity:
            if (stored.kind != LiteralKind::Quantity) return false;
            if (normalize_label(stored.unit) != normalize_label(query.unit)) return false;
            return apply_op(stored.number, op, query.number);
        case LiteralKind::Year: {
            int y;
            if (stored.kind == LiteralKind::Year)
                y = stored.year;
            else if (stored.kind == LiteralKind::Date)
                y = stored.date.year;
            else
                return false;
            return apply_op(y, op, query.year);
        }
        case LiteralKind::Date:
            if (stored.kind != LiteralKind::Date) return false;
            return apply_op(stored.date, op, query.date);
    }
    return false;
}

}  // namespace kbqa
