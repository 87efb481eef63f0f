// Command-line front end: compile -> count -> enumerate -> build-lut ->
// sensitivity -> predict -> search -> sweep -> export.
//
// Progress goes to stderr; machine-readable results go to stdout or -o files.
// Exit codes: 0 success, 2 validation/parse errors, 3 infeasible budget.

#include "tailor/compiler.hpp"
#include "tailor/enumerator.hpp"
#include "tailor/errors.hpp"
#include "tailor/graph.hpp"
#include "tailor/modspace.hpp"
#include "tailor/optimizer.hpp"
#include "tailor/predictors.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>

using namespace tailor;

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

int default_jobs() {
    if (const char* env = std::getenv("TAILOR_JOBS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::vector<enumerate::FusionRule> fusion_rules_for(const std::string& choice) {
    if (choice == "default") return enumerate::default_fusion_rules();
    if (choice == "none") return {};
    throw ValidationError("unknown fusion ruleset '" + choice + "' (expected default|none)");
}

std::unique_ptr<predict::CostBackend> make_backend(const std::string& spec,
                                                   const std::string& device) {
    if (spec == "analytical") return std::make_unique<predict::AnalyticalBackend>(device);
    if (spec.rfind("file:", 0) == 0)
        return std::make_unique<predict::MeasurementFileBackend>(spec.substr(5));
    throw ValidationError("unknown backend '" + spec + "' (expected analytical|file:<path>)");
}

std::unique_ptr<predict::AccuracyOracle> make_oracle(const std::string& spec,
                                                     const space::ModificationSpace& sp,
                                                     const ir::ModulePtr& model) {
    if (spec.rfind("synthetic:", 0) == 0) {
        std::string args = spec.substr(10);
        std::uint64_t seed = 0;
        double eps = 0.0, base = 80.0;
        std::size_t pos = 0;
        bool first = true;
        while (pos < args.size()) {
            std::size_t comma = args.find(',', pos);
            std::string part =
                args.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            pos = comma == std::string::npos ? args.size() : comma + 1;
            if (first) {
                seed = std::strtoull(part.c_str(), nullptr, 10);
                first = false;
            } else if (part.rfind("eps=", 0) == 0) {
                eps = std::strtod(part.c_str() + 4, nullptr);
            } else if (part.rfind("base=", 0) == 0) {
                base = std::strtod(part.c_str() + 5, nullptr);
            } else {
                throw ValidationError("unknown oracle argument '" + part + "'");
            }
        }
        return std::make_unique<predict::SyntheticOracle>(sp, model, seed, eps, base);
    }
    if (spec.rfind("file:", 0) == 0) {
        auto oracle = std::make_unique<predict::FileOracle>(spec.substr(5));
        oracle->bind(sp, model);
        return oracle;
    }
    throw ValidationError("unknown oracle '" + spec + "' (expected synthetic:<seed>[,eps=..][,base=..]|file:<path>)");
}

std::vector<double> parse_budgets(const std::string& text) {
    // Either "a:b:n" (n budgets linearly spaced over [a, b]) or a comma list.
    std::vector<double> out;
    auto c1 = text.find(':');
    if (c1 != std::string::npos) {
        auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string::npos)
            throw ValidationError("budget ranges use start:stop:count");
        double start = std::strtod(text.substr(0, c1).c_str(), nullptr);
        double stop = std::strtod(text.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
        long count = std::strtol(text.c_str() + c2 + 1, nullptr, 10);
        if (count < 1 || stop < start)
            throw ValidationError("malformed budget range '" + text + "'");
        for (long i = 0; i < count; ++i)
            out.push_back(count == 1 ? start
                                     : start + (stop - start) * static_cast<double>(i) /
                                                   static_cast<double>(count - 1));
        return out;
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        out.push_back(std::strtod(
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos).c_str(),
            nullptr));
        pos = comma == std::string::npos ? text.size() : comma + 1;
    }
    if (out.empty()) throw ValidationError("no budgets given");
    return out;
}

void check_lut_fusion(const predict::LatencyLUT& lut, const std::vector<enumerate::FusionRule>& rules) {
    auto want = enumerate::fusion_ruleset_hash(rules);
    if (lut.provenance.fusion_ruleset_hash != want)
        throw ValidationError("LUT was built under a different fusion ruleset (hash " +
                              std::to_string(lut.provenance.fusion_ruleset_hash) + " vs " +
                              std::to_string(want) + "); pass the matching --fusion");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tailorforge: SuperNet compilation, learning-free predictors, and architecture search"};
    app.require_subcommand(1);

    // -- compile -------------------------------------------------------------
    std::string graph_path, config_path, out_dir;
    auto* cmd_compile = app.add_subcommand("compile", "Compile a graph and config into a SuperNet");
    cmd_compile->add_option("graph", graph_path, "input .tfg graph")->required();
    cmd_compile->add_option("config", config_path, "modification-space config")->required();
    cmd_compile->add_option("-o,--output", out_dir, "output artifact directory")->required();

    // -- count ---------------------------------------------------------------
    std::string model_dir;
    auto* cmd_count = app.add_subcommand("count", "Count distinct architectures in the space");
    cmd_count->add_option("-m,--model", model_dir, "compiled artifact directory")->required();

    // -- enumerate -------------------------------------------------------------
    std::string manifest_out, fusion_choice = "default";
    int jobs = default_jobs();
    auto* cmd_enum = app.add_subcommand("enumerate", "Extract the unique-operator manifest");
    cmd_enum->add_option("-m,--model", model_dir)->required();
    cmd_enum->add_option("-o,--output", manifest_out, "manifest file")->required();
    cmd_enum->add_option("--fusion", fusion_choice, "fusion ruleset: default|none");
    cmd_enum->add_option("--jobs", jobs, "worker count");

    // -- build-lut -------------------------------------------------------------
    std::string manifest_in, backend_spec = "analytical", device_id = "default-device",
                lut_out, created_at;
    auto* cmd_lut = app.add_subcommand("build-lut", "Fill a latency/energy LUT for a device");
    cmd_lut->add_option("-m,--model", model_dir)->required();
    cmd_lut->add_option("--manifest", manifest_in, "unique-operator manifest")->required();
    cmd_lut->add_option("--backend", backend_spec, "analytical|file:<path>");
    cmd_lut->add_option("--device", device_id, "device identifier")->required();
    cmd_lut->add_option("-o,--output", lut_out, "LUT file")->required();
    cmd_lut->add_option("--created-at", created_at, "provenance timestamp override");
    cmd_lut->add_option("--jobs", jobs, "worker count");

    // -- sensitivity -------------------------------------------------------------
    std::string oracle_spec, sens_out;
    auto* cmd_sens = app.add_subcommand("sensitivity", "Build the modification sensitivity table");
    cmd_sens->add_option("-m,--model", model_dir)->required();
    cmd_sens->add_option("--oracle", oracle_spec,
                         "synthetic:<seed>[,eps=..][,base=..] or file:<path>")->required();
    cmd_sens->add_option("-o,--output", sens_out, "sensitivity table file")->required();

    // -- predict -------------------------------------------------------------
    std::string spec_text = "default", lut_in, sens_in;
    auto* cmd_predict = app.add_subcommand("predict", "Predict latency/memory/accuracy of one SubNet");
    cmd_predict->add_option("-m,--model", model_dir)->required();
    cmd_predict->add_option("--spec", spec_text, "SubNet spec string (default: maximal)");
    cmd_predict->add_option("--lut", lut_in, "LUT file (enables latency/energy)");
    cmd_predict->add_option("--sens", sens_in, "sensitivity table (enables accuracy)");
    cmd_predict->add_option("--fusion", fusion_choice, "fusion ruleset: default|none");

    // -- search -------------------------------------------------------------
    double budget_ms = 0;
    search::SearchConfig scfg;
    auto add_search_opts = [&](CLI::App* cmd) {
        cmd->add_option("-m,--model", model_dir)->required();
        cmd->add_option("--lut", lut_in)->required();
        cmd->add_option("--sens", sens_in)->required();
        cmd->add_option("--fusion", fusion_choice, "fusion ruleset: default|none");
        cmd->add_option("--seed", scfg.seed, "search seed");
        cmd->add_option("--population", scfg.population);
        cmd->add_option("--generations", scfg.generations);
        cmd->add_option("--mutation-prob", scfg.mutation_prob);
        cmd->add_option("--parent-fraction", scfg.parent_fraction);
        cmd->add_option("--mutate-fraction", scfg.mutate_fraction);
        cmd->add_option("--crossover-fraction", scfg.crossover_fraction);
        cmd->add_option("--beam-width", scfg.beam_width);
        cmd->add_option("--jobs", scfg.jobs, "worker count");
    };
    auto* cmd_search = app.add_subcommand("search", "Find the best architecture under a budget");
    add_search_opts(cmd_search);
    cmd_search->add_option("--budget", budget_ms, "latency budget in ms")->required();

    // -- sweep -------------------------------------------------------------
    std::string budgets_text, frontier_out;
    auto* cmd_sweep = app.add_subcommand("sweep", "Pareto frontier over latency budgets");
    add_search_opts(cmd_sweep);
    cmd_sweep->add_option("--budgets", budgets_text, "comma list or start:stop:count")->required();
    cmd_sweep->add_option("-o,--output", frontier_out, "frontier CSV")->required();

    // -- export -------------------------------------------------------------
    std::string export_out;
    auto* cmd_export = app.add_subcommand("export", "Build one SubNet and write it as .tfg");
    cmd_export->add_option("-m,--model", model_dir)->required();
    cmd_export->add_option("--spec", spec_text, "SubNet spec string");
    cmd_export->add_option("-o,--output", export_out, "output graph file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (cmd_compile->parsed()) {
            auto g = load_graph_file(graph_path);
            auto cfg = space::parse_config_file(config_path);
            auto result = compiler::compile(g, cfg);
            compiler::save_compiled(g, cfg, result, out_dir);
            std::cerr << "compiled " << graph_path << " -> " << out_dir << "\n";
            std::cout << result.report;
            return 0;
        }

        if (cmd_count->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            std::cout << space::count_variants(r.space, r.model).to_string() << "\n";
            return 0;
        }

        if (cmd_enum->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            auto rules = fusion_rules_for(fusion_choice);
            enumerate::EnumerationStats stats;
            auto keys = enumerate::enumerate_unique_operators(r.model, r.space, rules, jobs, &stats);
            enumerate::save_manifest(keys, rules, manifest_out);
            std::cerr << "unique keys: " << stats.unique_keys
                      << " (key computations: " << stats.key_computations
                      << ", naive: " << stats.naive_key_computations.to_string() << ")\n";
            return 0;
        }

        if (cmd_lut->parsed()) {
            auto manifest_hash = std::uint64_t{0};
            auto manifest = enumerate::load_manifest(manifest_in, &manifest_hash);
            auto backend = make_backend(backend_spec, device_id);
            auto lut = predict::build_latency_lut(manifest, *backend, device_id, manifest_hash,
                                                  created_at.empty() ? now_utc() : created_at,
                                                  jobs);
            predict::save_lut(lut, lut_out);
            std::cerr << "LUT with " << lut.entries.size() << " entries -> " << lut_out << "\n";
            return 0;
        }

        if (cmd_sens->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            auto oracle = make_oracle(oracle_spec, r.space, r.model);
            auto table = predict::build_sensitivity_table(r.space, r.model, *oracle);
            predict::save_sensitivity(table, sens_out);
            std::cerr << "sensitivity table (" << table.deltas.size() << " rows, "
                      << oracle->call_count() << " oracle calls) -> " << sens_out << "\n";
            return 0;
        }

        if (cmd_predict->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            auto spec = space::spec_from_string(spec_text, r.space);
            auto mem = predict::predict_memory(spec, r.model, r.space);
            if (!lut_in.empty()) {
                auto lut = predict::load_lut(lut_in);
                auto rules = fusion_rules_for(fusion_choice);
                check_lut_fusion(lut, rules);
                auto cost = predict::predict_cost(spec, r.model, r.space, lut, rules);
                std::cout << "latency_ms=" << fmt(cost.latency_ms) << "\n";
                if (cost.energy_mj) std::cout << "energy_mj=" << fmt(*cost.energy_mj) << "\n";
            }
            std::cout << "param_bytes=" << mem.param_bytes << "\n";
            std::cout << "peak_activation_bytes=" << mem.peak_activation_bytes << "\n";
            std::cout << "total_bytes=" << mem.total_bytes << "\n";
            if (!sens_in.empty()) {
                auto table = predict::load_sensitivity(sens_in);
                std::cout << "accuracy="
                          << fmt(predict::predict_accuracy(spec, table, r.space, r.model)) << "\n";
            }
            return 0;
        }

        if (cmd_search->parsed() || cmd_sweep->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            auto lut = predict::load_lut(lut_in);
            auto rules = fusion_rules_for(fusion_choice);
            check_lut_fusion(lut, rules);
            auto table = predict::load_sensitivity(sens_in);
            search::PredictorSet p{&r.space, r.model, &table, &lut, rules};

            if (cmd_search->parsed()) {
                auto spec = search::genetic_search(p, budget_ms, scfg);
                search::Evaluator eval(p);
                auto score = eval.eval(spec);
                std::cout << "spec=" << space::spec_to_string(spec, r.space, r.model) << "\n";
                std::cout << "pred_latency_ms=" << fmt(score.latency_ms) << "\n";
                std::cout << "pred_accuracy=" << fmt(score.accuracy) << "\n";
                return 0;
            }
            auto budgets = parse_budgets(budgets_text);
            auto sweep = search::pareto_sweep(p, budgets, scfg);
            search::save_frontier(sweep, p, frontier_out);
            std::cerr << "frontier with " << sweep.frontier.size() << " points ("
                      << sweep.infeasible_budgets.size() << " infeasible budgets) -> "
                      << frontier_out << "\n";
            return 0;
        }

        if (cmd_export->parsed()) {
            auto r = compiler::load_compiled(model_dir);
            auto spec = space::spec_from_string(spec_text, r.space);
            auto g = space::apply_subnet(r.model, spec, r.space);
            export_graph_file(g, export_out);
            std::cerr << "exported " << export_out << "\n";
            return 0;
        }
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what()
                  << " (minimum known latency: " << fmt(e.min_known_latency_ms) << " ms)\n";
        return 3;
    } catch (const LegalityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
