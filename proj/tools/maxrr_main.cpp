// Experiment driver: composes ranking, split-model training, unlearning and
// MIA auditing into reproducible studies. Every subcommand is deterministic
// given its config; flags override config-file fields which override defaults.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "maxrr/error.hpp"
#include "maxrr/experiment.hpp"

namespace {

struct FlagOverrides {
    std::string config_path;
    std::string out_dir;
    std::string arch;
    std::string data_dir;
    std::string pool;
    int64_t seed = -1;
    int runs = -1;
    int ranking_runs = -1;
    int64_t k = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "JSON config file");
        cmd->add_option("-o,--out", out_dir, "output directory");
        cmd->add_option("--arch", arch, "architecture (mlp, mlp:<h1>:<h2>, lenet5)");
        cmd->add_option("--data-dir", data_dir, "IDX data directory (or $MAXRR_DATA_DIR)");
        cmd->add_option("--pool", pool, "SVM retraining pool: full | support");
        cmd->add_option("--seed", seed, "base seed");
        cmd->add_option("--runs", runs, "number of study runs");
        cmd->add_option("--ranking-runs", ranking_runs, "trainings used for the SV ranking");
        cmd->add_option("--k", k, "core-set size (0 = corpus/3)");
    }

    maxrr::ExperimentConfig resolve() const {
        maxrr::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = maxrr::ExperimentConfig::from_file(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!arch.empty()) cfg.arch = arch;
        if (!data_dir.empty()) cfg.corpus.data_dir = data_dir;
        if (!pool.empty()) {
            if (pool == "full") {
                cfg.pool = maxrr::PoolPolicy::Full;
            } else if (pool == "support") {
                cfg.pool = maxrr::PoolPolicy::Support;
            } else {
                throw maxrr::InvalidParam("--pool must be 'full' or 'support'");
            }
        }
        if (seed >= 0) cfg.seed = uint64_t(seed);
        if (runs >= 0) cfg.runs = runs;
        if (ranking_runs >= 0) cfg.ranking_runs = ranking_runs;
        if (k >= 0) cfg.k = size_t(k);
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maxrr: unlearning-aware model splitting toolkit"};
    app.require_subcommand(1);

    FlagOverrides rank_flags, train_flags, unlearn_flags, audit_flags, table_flags,
        sens_flags;

    CLI::App* rank = app.add_subcommand("rank", "support-vector frequency ranking");
    rank_flags.attach(rank);

    CLI::App* train = app.add_subcommand("train", "unlearning-aware training");
    train_flags.attach(train);

    CLI::App* unlearn = app.add_subcommand("unlearn", "apply an unlearning request");
    unlearn_flags.attach(unlearn);
    std::string model_path, forget_spec;
    unlearn->add_option("--model", model_path, "model container (default <out>/model.bin)");
    unlearn->add_option("--forget", forget_spec,
                        "forget spec: directives ';'-separated, or @file");

    CLI::App* audit = app.add_subcommand("audit", "multi-run MIA comparison of two strategies");
    audit_flags.attach(audit);
    std::string strategy_a = "maxrr", strategy_b = "full-retrain", audit_forget;
    audit->add_option("--strategy-a", strategy_a, "maxrr | full-retrain | fe-only");
    audit->add_option("--strategy-b", strategy_b, "maxrr | full-retrain | fe-only");
    audit->add_option("--forget", audit_forget, "forget spec (directives or @file)");

    CLI::App* table = app.add_subcommand("table1", "accuracy table across unlearning scenarios");
    table_flags.attach(table);

    CLI::App* sens = app.add_subcommand("sensitivity", "component sensitivity study");
    sens_flags.attach(sens);

    CLI11_PARSE(app, argc, argv);

    try {
        if (rank->parsed()) maxrr::cmd_rank(rank_flags.resolve());
        if (train->parsed()) maxrr::cmd_train(train_flags.resolve());
        if (unlearn->parsed()) {
            maxrr::cmd_unlearn(unlearn_flags.resolve(), model_path, forget_spec);
        }
        if (audit->parsed()) {
            maxrr::cmd_audit(audit_flags.resolve(), strategy_a, strategy_b, audit_forget);
        }
        if (table->parsed()) maxrr::cmd_table1(table_flags.resolve());
        if (sens->parsed()) maxrr::cmd_sensitivity(sens_flags.resolve());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
