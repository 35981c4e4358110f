#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace kbqa {

enum class LiteralKind { String, Quantity, Year, Date };

struct CalendarDate {
    int year = 0;
    int month = 1;
    int day = 1;

    bool ok() const;
    std::string to_string() const;  // ISO-8601 YYYY-MM-DD
    static std::optional<CalendarDate> parse(std::string_view s);

    friend auto operator<=>(const CalendarDate&, const CalendarDate&) = default;
};

// Tagged value; only the fields of the active kind are meaningful.
struct Literal {
    LiteralKind kind = LiteralKind::String;
    std::string text;   // String
    double number = 0;  // Quantity value
    std::string unit;   // Quantity unit ("" = dimensionless)
    int year = 0;       // Year
    CalendarDate date;  // Date

    static Literal str(std::string s);
    static Literal quantity(double value, std::string unit = "");
    static Literal of_year(int y);
    static Literal of_date(CalendarDate d);

    bool operator==(const Literal&) const = default;
    std::string render() const;
};

// Typed parsers for textual program arguments.
std::optional<Literal> parse_quantity(std::string_view s);  // "200 centimetres" | "200"
std::optional<Literal> parse_year(std::string_view s);
std::optional<Literal> parse_date(std::string_view s);
// Best guess: date, then year, then quantity, then string.
Literal parse_literal_guess(std::string_view s);

enum class CompareOp { Eq, Ne, Lt, Gt };
std::optional<CompareOp> parse_compare_op(std::string_view s);
const char* compare_op_name(CompareOp op);

// Typed comparison of a stored KB literal against a query literal.
// Quantities require identical units (mismatch is false for every op).
// A query Year matches a stored Date through the date's year component.
// Kind mismatches are false, never an error.
bool compare_literals(const Literal& stored, CompareOp op, const Literal& query);

}  // namespace kbqa
