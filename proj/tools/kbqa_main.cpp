#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kbqa/dataset.hpp"
#include "kbqa/executor.hpp"
#include "kbqa/kb.hpp"
#include "kbqa/metrics.hpp"
#include "kbqa/pruning.hpp"
#include "kbqa/synth.hpp"
#include "kbqa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kbqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCli = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitData = 4;
constexpr int kExitRuntime = 5;

struct MissingFileError : std::runtime_error {
    explicit MissingFileError(const std::string& path)
        : std::runtime_error("file not found: " + path) {}
};

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw MissingFileError(path);
}

std::string default_run_dir(const std::string& cmd, std::uint64_t seed) {
    return "runs/" + cmd + "-" + std::to_string(std::time(nullptr)) + "-s" + std::to_string(seed);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void echo_config(const std::string& dir, const json& cfg) {
    write_file(dir + "/effective_config.json", cfg.dump(2) + "\n");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json train_config_json(const TrainConfig& tc) {
    return json{{"epochs", tc.epochs},
                {"batch_size", tc.batch_size},
                {"beam", tc.beam},
                {"topk", tc.topk},
                {"lr_encoder", tc.lr_encoder},
                {"lr_other", tc.lr_other},
                {"weight_decay", tc.weight_decay},
                {"seed", tc.seed},
                {"strategy", tc.strategy},
                {"no_pretrain", tc.no_pretrain},
                {"no_pretrain_args", tc.no_pretrain_args},
                {"no_finetune", tc.no_finetune},
                {"no_ontology", tc.no_ontology},
                {"reinforce_baseline", tc.reinforce_baseline}};
}

json model_config_json(const ModelConfig& mc) {
    return json{{"d", mc.d}, {"d_hat", mc.d_hat}, {"max_len", mc.max_len},
                {"init_seed", mc.init_seed}};
}

void add_model_flags(CLI::App* cmd, ModelConfig& mc) {
    cmd->add_option("--d", mc.d, "decoder hidden size");
    cmd->add_option("--d-hat", mc.d_hat, "encoder vector size");
    cmd->add_option("--max-len", mc.max_len, "maximum decoded program length");
    cmd->add_option("--init-seed", mc.init_seed, "parameter initialization seed");
}

void add_train_flags(CLI::App* cmd, TrainConfig& tc) {
    cmd->add_option("--epochs", tc.epochs, "training epochs");
    cmd->add_option("--batch-size", tc.batch_size, "examples per update");
    cmd->add_option("--beam", tc.beam, "sketch beam width");
    cmd->add_option("--topk", tc.topk, "argument assignments per sketch");
    cmd->add_option("--lr-encoder", tc.lr_encoder, "encoder-group learning rate");
    cmd->add_option("--lr-other", tc.lr_other, "learning rate for all other parameters");
    cmd->add_option("--weight-decay", tc.weight_decay, "decoupled weight decay");
    cmd->add_option("--seed", tc.seed, "run seed")->envname("KBQA_SEED");
    cmd->add_flag("--no-ontology", tc.no_ontology, "disable ontology-guided pruning");
}

// replay gold arguments through the pools to get one id per pool-taking token
std::vector<std::uint32_t> gold_choices(const KnowledgeBase& kb, const Program& prog) {
    CandidatePools pools = init_pools(kb);
    std::vector<std::uint32_t> choices;
    for (std::size_t t = 0; t < prog.tokens.size(); ++t) {
        Fn f = prog.tokens[t];
        ArgCategory cat = fn_info(f).category;
        if (cat != ArgCategory::Entity && cat != ArgCategory::Concept &&
            cat != ArgCategory::Relation)
            continue;
        const auto* pool = ensure_active_pool(pools, kb, f, static_cast<int>(t));
        std::vector<std::uint32_t> resolved;
        if (cat == ArgCategory::Entity) resolved = kb.resolve_entity(prog.args[t]);
        else if (cat == ArgCategory::Concept) resolved = kb.resolve_concept(prog.args[t]);
        else resolved = kb.resolve_relation(parse_relate_arg(prog.args[t]).relation_label);
        std::uint32_t chosen = 0;
        bool found = false;
        for (std::uint32_t id : *pool) {
            if (std::find(resolved.begin(), resolved.end(), id) != resolved.end()) {
                chosen = id;
                found = true;
                break;
            }
        }
        if (!found)
            throw DataError("argument '" + prog.args[t] + "' does not resolve into its pool");
        choices.push_back(chosen);
        update_pools(pools, kb, f, chosen, static_cast<int>(t));
    }
    return choices;
}

int cmd_gen(const SynthConfig& syn, std::string out_dir) {
    if (out_dir.empty()) out_dir = default_run_dir("gen", syn.seed);
    fs::create_directories(out_dir);
    echo_config(out_dir, json{{"command", "gen"},
                              {"seed", syn.seed},
                              {"source_size", syn.n_source},
                              {"target_size", syn.n_target},
                              {"persons", syn.persons},
                              {"orgs", syn.orgs},
                              {"venues", syn.venues},
                              {"second_membership", syn.second_membership}});

    SynthOutput out = generate_synthetic_domains(syn);
    save_kb(out.kb_source, out_dir + "/kb_source.json");
    save_kb(out.kb_target, out_dir + "/kb_target.json");
    save_dataset(out_dir + "/source.jsonl", out.source);

    std::size_t dev = out.target.size() >= 2 ? std::max<std::size_t>(1, out.target.size() * 3 / 10) : 0;
    std::size_t train = out.target.size() - dev;
    Dataset target_train(out.target.begin(), out.target.begin() + static_cast<std::ptrdiff_t>(train));
    Dataset target_dev(out.target.begin() + static_cast<std::ptrdiff_t>(train), out.target.end());
    save_dataset(out_dir + "/target_train.jsonl", target_train);
    save_dataset(out_dir + "/target_dev.jsonl", target_dev);
    save_dataset(out_dir + "/target_hidden_gold.jsonl", out.target_gold);

    std::fprintf(stderr, "[gen] wrote %zu source, %zu target train, %zu target dev examples to %s\n",
                 out.source.size(), train, dev, out_dir.c_str());
    std::printf("%s\n", out_dir.c_str());
    return kExitOk;
}

int cmd_pretrain(const std::string& kb_path, const std::string& data_path, std::string out_dir,
                 ModelConfig mc, TrainConfig tc) {
    tc.validate();
    require_file(kb_path);
    require_file(data_path);
    if (out_dir.empty()) out_dir = default_run_dir("pretrain", tc.seed);
    fs::create_directories(out_dir);
    json cfg = train_config_json(tc);
    cfg["command"] = "pretrain";
    cfg["kb"] = kb_path;
    cfg["data"] = data_path;
    cfg["model"] = model_config_json(mc);
    echo_config(out_dir, cfg);

    KnowledgeBase kb = load_kb(kb_path);
    Dataset data = load_dataset(data_path);
    ModelBundle m = init_model(mc, data, kb);
    auto history = pretrain(m, data, kb, tc);

    std::string csv = "epoch,sketch_loss,arg_loss,total\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        csv += std::to_string(e) + "," + fmt(history[e].sketch_loss) + "," +
               fmt(history[e].arg_loss) + "," + fmt(history[e].total()) + "\n";
    write_file(out_dir + "/pretrain_loss.csv", csv);
    save_model(m, out_dir + "/model");
    if (!history.empty())
        std::fprintf(stderr, "[pretrain] final loss %.6f after %zu epochs\n",
                     history.back().total(), history.size());
    std::printf("%s\n", (out_dir + "/model").c_str());
    return kExitOk;
}

int cmd_finetune(const std::string& kb_path, const std::string& data_path,
                 const std::string& model_dir, std::string out_dir, ModelConfig mc,
                 TrainConfig tc) {
    tc.validate();
    require_file(kb_path);
    require_file(data_path);
    if (!tc.no_pretrain) {
        if (model_dir.empty()) throw ConfigError("--model is required unless --no-pretrain is set");
        require_file(model_dir + "/params.bin");
    }
    if (out_dir.empty()) out_dir = default_run_dir("finetune", tc.seed);
    fs::create_directories(out_dir);
    json cfg = train_config_json(tc);
    cfg["command"] = "finetune";
    cfg["kb"] = kb_path;
    cfg["data"] = data_path;
    cfg["input_model"] = model_dir;
    echo_config(out_dir, cfg);

    KnowledgeBase kb = load_kb(kb_path);
    Dataset data = load_dataset(data_path);
    ModelBundle m;
    if (tc.no_pretrain) {
        m = init_model(mc, data, kb);
    } else {
        m = load_model(model_dir);
        int added = extend_model(m, data, kb, tc.seed);
        std::fprintf(stderr, "[finetune] vocabulary extended by %d tokens\n", added);
    }

    if (!tc.no_finetune) {
        auto history = tc.strategy == "reinforce" ? finetune_reinforce(m, data, kb, tc)
                                                  : finetune_hard_em(m, data, kb, tc);
        std::string csv = "epoch,mean_f1,skipped,baseline\n";
        for (std::size_t e = 0; e < history.size(); ++e)
            csv += std::to_string(e) + "," + fmt(history[e].mean_f1) + "," +
                   std::to_string(history[e].skipped) + "," + fmt(history[e].baseline) + "\n";
        write_file(out_dir + "/finetune_log.csv", csv);
        if (!history.empty())
            std::fprintf(stderr, "[finetune] final %s value %.4f\n", tc.strategy.c_str(),
                         history.back().mean_f1);
    } else {
        std::fprintf(stderr, "[finetune] --no-finetune: passing the model through untrained\n");
    }
    save_model(m, out_dir + "/model");
    std::printf("%s\n", (out_dir + "/model").c_str());
    return kExitOk;
}

int cmd_eval(const std::string& kb_path, const std::string& data_path,
             const std::string& model_dir, std::string out_dir, TrainConfig tc) {
    tc.validate();
    require_file(kb_path);
    require_file(data_path);
    require_file(model_dir + "/params.bin");
    if (out_dir.empty()) out_dir = default_run_dir("eval", tc.seed);
    fs::create_directories(out_dir);
    json cfg = train_config_json(tc);
    cfg["command"] = "eval";
    cfg["kb"] = kb_path;
    cfg["data"] = data_path;
    cfg["input_model"] = model_dir;
    echo_config(out_dir, cfg);

    KnowledgeBase kb = load_kb(kb_path);
    Dataset data = load_dataset(data_path);
    ModelBundle m = load_model(model_dir);
    MetricsReport rep = evaluate(m, data, kb, tc);

    write_file(out_dir + "/metrics.json", rep.to_json() + "\n");
    std::fputs(rep.to_table().c_str(), stderr);
    std::printf("%s\n", rep.to_json().c_str());
    return kExitOk;
}

int cmd_exec(const std::string& kb_path, const std::string& program_text) {
    require_file(kb_path);
    KnowledgeBase kb = load_kb(kb_path);
    Program prog = parse_program_text(program_text);
    ExecutionResult res = execute(prog, kb);
    for (const auto& a : res.answers) std::printf("%s\n", a.c_str());
    return kExitOk;
}

int cmd_prune_stats(const std::string& kb_path, const std::string& data_path,
                    const std::string& out_dir) {
    require_file(kb_path);
    require_file(data_path);
    KnowledgeBase kb = load_kb(kb_path);
    Dataset data = load_dataset(data_path);
    if (data.empty()) throw DataError("prune-stats: empty dataset");

    std::string csv =
        "index,pruned,unpruned,ratio,pruned_skip_entity,unpruned_skip_entity,ratio_skip_entity\n";
    double sp = 0, su = 0, sps = 0, sus = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data[i].program)
            throw DataError("prune-stats: example " + std::to_string(i) + " has no program");
        const Program& prog = *data[i].program;
        SearchSpace s = search_space_size(prog.tokens, kb, gold_choices(kb, prog));
        sp += s.pruned;
        su += s.unpruned;
        sps += s.pruned_skip_entity;
        sus += s.unpruned_skip_entity;
        ++counted;
        csv += std::to_string(i) + "," + fmt(s.pruned) + "," + fmt(s.unpruned) + "," +
               fmt(s.pruned > 0 ? s.unpruned / s.pruned : 0) + "," + fmt(s.pruned_skip_entity) +
               "," + fmt(s.unpruned_skip_entity) + "," +
               fmt(s.pruned_skip_entity > 0 ? s.unpruned_skip_entity / s.pruned_skip_entity : 0) +
               "\n";
    }
    double n = static_cast<double>(counted);
    csv += "mean," + fmt(sp / n) + "," + fmt(su / n) + "," + fmt(sp > 0 ? su / sp : 0) + "," +
           fmt(sps / n) + "," + fmt(sus / n) + "," + fmt(sps > 0 ? sus / sps : 0) + "\n";
    std::fputs(csv.c_str(), stdout);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(out_dir + "/prune_stats.csv", csv);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage program transfer for KBQA: generate, train, evaluate, execute"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a TOML-style config file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    app.add_option("--workers", workers, "worker fan-out for candidate execution (runs are serial)")
        ->envname("KBQA_WORKERS");

    SynthConfig syn;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "generate the synthetic source/target domain pair");
    gen->add_option("--seed", syn.seed, "generation seed")->envname("KBQA_SEED");
    gen->add_option("--source-size", syn.n_source, "source question-program pairs");
    gen->add_option("--target-size", syn.n_target, "target question-answer pairs");
    gen->add_option("--persons", syn.persons, "person entities per domain");
    gen->add_option("--orgs", syn.orgs, "organization entities per domain");
    gen->add_option("--venues", syn.venues, "venue entities per domain");
    gen->add_option("--second-membership", syn.second_membership,
                    "chance of a second org membership");
    gen->add_option("--out", gen_out, "output directory");

    std::string pre_kb, pre_data, pre_out;
    ModelConfig pre_mc;
    TrainConfig pre_tc;
    auto* pre = app.add_subcommand("pretrain", "train on source question-program pairs");
    pre->add_option("--kb", pre_kb, "source knowledge base JSON")->required();
    pre->add_option("--data", pre_data, "source dataset JSONL")->required();
    pre->add_option("--out", pre_out, "run directory");
    add_model_flags(pre, pre_mc);
    add_train_flags(pre, pre_tc);
    pre->add_flag("--no-pretrain-args", pre_tc.no_pretrain_args,
                  "pretrain the sketch parser only");

    std::string ft_kb, ft_data, ft_model, ft_out;
    ModelConfig ft_mc;
    TrainConfig ft_tc;
    auto* ft = app.add_subcommand("finetune", "finetune on target question-answer pairs");
    ft->add_option("--kb", ft_kb, "target knowledge base JSON")->required();
    ft->add_option("--data", ft_data, "target dataset JSONL")->required();
    ft->add_option("--model", ft_model, "pretrained model directory");
    ft->add_option("--out", ft_out, "run directory");
    add_model_flags(ft, ft_mc);
    add_train_flags(ft, ft_tc);
    ft->add_option("--strategy", ft_tc.strategy, "hard-em or reinforce");
    ft->add_flag("--no-pretrain", ft_tc.no_pretrain, "start from random parameters");
    ft->add_flag("--no-finetune", ft_tc.no_finetune, "skip training, pass the model through");
    bool no_baseline = false;
    ft->add_flag("--no-baseline", no_baseline, "disable the reinforce reward baseline");

    std::string ev_kb, ev_data, ev_model, ev_out;
    TrainConfig ev_tc;
    auto* ev = app.add_subcommand("eval", "report F1 / Hits@1 / best-F1-in-top-k");
    ev->add_option("--kb", ev_kb, "knowledge base JSON")->required();
    ev->add_option("--data", ev_data, "dataset JSONL with answers")->required();
    ev->add_option("--model", ev_model, "model directory")->required();
    ev->add_option("--out", ev_out, "run directory");
    add_train_flags(ev, ev_tc);

    std::string ex_kb, ex_prog;
    auto* ex = app.add_subcommand("exec", "execute one program against a knowledge base");
    ex->add_option("--kb", ex_kb, "knowledge base JSON")->required();
    ex->add_option("--program", ex_prog, "program text, e.g. \"Find(x);QueryName()\"")->required();

    std::string ps_kb, ps_data, ps_out;
    auto* ps = app.add_subcommand("prune-stats",
                                  "per-question pruned/unpruned search-space sizes as CSV");
    ps->add_option("--kb", ps_kb, "knowledge base JSON")->required();
    ps->add_option("--data,--dataset", ps_data, "dataset JSONL with programs")->required();
    ps->add_option("--out", ps_out, "optional directory for the CSV copy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitCli;
    }

    try {
        if (gen->parsed()) return cmd_gen(syn, gen_out);
        if (pre->parsed()) return cmd_pretrain(pre_kb, pre_data, pre_out, pre_mc, pre_tc);
        if (ft->parsed()) {
            ft_tc.reinforce_baseline = !no_baseline;
            return cmd_finetune(ft_kb, ft_data, ft_model, ft_out, ft_mc, ft_tc);
        }
        if (ev->parsed()) return cmd_eval(ev_kb, ev_data, ev_model, ev_out, ev_tc);
        if (ex->parsed()) return cmd_exec(ex_kb, ex_prog);
        if (ps->parsed()) return cmd_prune_stats(ps_kb, ps_data, ps_out);
        std::fprintf(stderr, "no subcommand\n");
        return kExitCli;
    } catch (const MissingFileError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMissingFile;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCli;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const KbError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const ProgramParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
