#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmloss/checkpoint.hpp"
#include "hmloss/config_io.hpp"
#include "hmloss/data.hpp"
#include "hmloss/gradcheck.hpp"
#include "hmloss/hard_mining.hpp"
#include "hmloss/trainer.hpp"
#include "hmloss/verify.hpp"

namespace hmloss::cli {

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_field(double v) { return std::isnan(v) ? std::string() : fmt(v); }

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path.string());
    f << content;
    if (!f)
        throw std::runtime_error("write failed for " + path.string());
}

inline std::string metrics_csv(const std::vector<EpochMetrics>& log) {
    std::string csv = "epoch,lr,mean_base_loss,mean_hm_loss,hard_fraction\n";
    for (const EpochMetrics& m : log) {
        csv += std::to_string(m.epoch);
        csv += ',';
        csv += fmt(m.lr);
        csv += ',';
        csv += fmt(m.mean_base_loss);
        csv += ',';
        csv += csv_field(m.mean_hm_loss);
        csv += ',';
        csv += csv_field(m.hard_fraction);
        csv += '\n';
    }
    return csv;
}

inline nlohmann::json report_to_json(const VerificationReport& r) {
    return nlohmann::json{{"n_pairs", r.n_pairs},
                          {"folds", r.fold_accuracies.size()},
                          {"fold_thresholds", r.fold_thresholds},
                          {"fold_accuracies", r.fold_accuracies},
                          {"mean_accuracy", r.mean_accuracy}};
}

/// Holds every train flag plus the CLI::Option handles needed to apply the
/// flags-over-config-file-over-defaults precedence.
struct LossFlagSet {
    std::string loss = "hm-ce";
    double alpha = 1.5, beta = 1.1, sigmoid_slope = 35.0, sigmoid_center = 0.75;
    std::string hm_mode = "per-sample";
    int angular_margin = 4;
    double arc_scale = 64.0, arc_margin = 0.5;

    CLI::Option *o_loss = nullptr, *o_alpha = nullptr, *o_beta = nullptr, *o_slope = nullptr,
                *o_center = nullptr, *o_mode = nullptr, *o_angular = nullptr, *o_scale = nullptr,
                *o_margin = nullptr;

    void add_to(CLI::App* cmd) {
        o_loss = cmd->add_option("--loss", loss, "loss head: ce, hm-ce, as, hm-as, af, hm-af");
        o_alpha = cmd->add_option("--alpha", alpha, "hard-mining gain");
        o_beta = cmd->add_option("--beta", beta, "hard-mining loss scale");
        o_slope = cmd->add_option("--sigmoid-slope", sigmoid_slope, "sigmoid slope (A)");
        o_center = cmd->add_option("--sigmoid-center", sigmoid_center, "sigmoid center (B)");
        o_mode = cmd->add_option("--hm-mode", hm_mode, "per-sample or batch-mean");
        o_angular = cmd->add_option("--angular-margin", angular_margin,
                                    "multiplicative angular margin (as, hm-as)");
        o_scale = cmd->add_option("--arc-scale", arc_scale, "feature scale (af, hm-af)");
        o_margin = cmd->add_option("--arc-margin", arc_margin, "additive angular margin (af, hm-af)");
    }

    void apply_given(LossSpec& spec) const {
        if (o_loss->count()) spec.kind = loss_kind_from_string(loss);
        if (o_alpha->count()) spec.hard_mining.alpha = alpha;
        if (o_beta->count()) spec.hard_mining.beta = beta;
        if (o_slope->count()) spec.hard_mining.sigmoid.slope = sigmoid_slope;
        if (o_center->count()) spec.hard_mining.sigmoid.center = sigmoid_center;
        if (o_mode->count()) spec.hard_mining.mode = hm_mode_from_string(hm_mode);
        if (o_angular->count()) spec.angular.margin = angular_margin;
        if (o_scale->count()) spec.arc.scale = arc_scale;
        if (o_margin->count()) spec.arc.margin = arc_margin;
    }
};

} // namespace detail

/// Runs the CLI on the given argument list (without the program name).
/// Exit codes: 0 success, 2 invalid arguments, 3 runtime failure.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hard-mining loss workbench: synthetic data, training, verification"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic identity dataset and pairs");
    struct {
        int identities = 20, per_class = 50, dim = 16, pairs = 600;
        double noise = 0.3;
        std::uint64_t seed = 1, pair_seed = 2;
        std::string data_out = "data.txt", pairs_out = "pairs.txt";
    } g;
    gen->add_option("--identities", g.identities, "number of identities");
    gen->add_option("--per-class", g.per_class, "samples per identity");
    gen->add_option("--dim", g.dim, "input dimension");
    gen->add_option("--noise", g.noise, "within-class noise sigma");
    gen->add_option("--seed", g.seed, "dataset seed");
    gen->add_option("--pairs", g.pairs, "number of verification pairs");
    gen->add_option("--pair-seed", g.pair_seed, "pair-sampling seed");
    gen->add_option("--data-out", g.data_out, "dataset output path");
    gen->add_option("--pairs-out", g.pairs_out, "pair-list output path");

    // train ------------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train the dense backbone with a chosen loss head");
    struct {
        std::string data, config, checkpoint_out = "checkpoint.ckpt", log_out;
        int batch_size = 64, epochs = 20;
        double initial_lr = 0.01, lr_decay_factor = 0.1, momentum = 0.9, weight_decay = 0.0;
        std::vector<int> lr_decay_epochs = {8, 12, 16};
        std::uint64_t seed = 42;
        std::vector<std::size_t> hidden_dims = {128};
        std::size_t embedding_dim = 16;
    } t;
    detail::LossFlagSet tloss;
    tr->add_option("--data", t.data, "dataset file")->required();
    tr->add_option("--config", t.config, "JSON config file (flags override its values)");
    tloss.add_to(tr);
    auto* o_batch = tr->add_option("--batch-size", t.batch_size, "mini-batch size");
    auto* o_lr = tr->add_option("--initial-lr", t.initial_lr, "initial learning rate");
    auto* o_decay_epochs = tr->add_option("--lr-decay-epochs", t.lr_decay_epochs,
                                          "epochs at which the rate decays")
                               ->delimiter(',');
    auto* o_decay_factor = tr->add_option("--lr-decay-factor", t.lr_decay_factor, "decay factor");
    auto* o_epochs = tr->add_option("--epochs", t.epochs, "training epochs");
    auto* o_momentum = tr->add_option("--momentum", t.momentum, "SGDM momentum");
    auto* o_wd = tr->add_option("--weight-decay", t.weight_decay, "L2 weight decay");
    auto* o_seed = tr->add_option("--seed", t.seed, "training seed");
    auto* o_hidden = tr->add_option("--hidden-dims", t.hidden_dims, "hidden layer widths")
                         ->delimiter(',');
    auto* o_embed = tr->add_option("--embedding-dim", t.embedding_dim, "embedding dimension");
    tr->add_option("--checkpoint-out", t.checkpoint_out, "checkpoint output path");
    tr->add_option("--log-out", t.log_out, "per-epoch metrics CSV path");

    // eval -------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on verification pairs");
    struct {
        std::string checkpoint, data, pairs, format = "text", report_out;
        int folds = 10;
        std::uint64_t fold_seed = 0;
    } e;
    ev->add_option("--checkpoint", e.checkpoint, "checkpoint file")->required();
    ev->add_option("--data", e.data, "dataset file")->required();
    ev->add_option("--pairs", e.pairs, "pair-list file")->required();
    ev->add_option("--folds", e.folds, "cross-validation folds");
    ev->add_option("--fold-seed", e.fold_seed, "fold-assignment seed");
    ev->add_option("--format", e.format, "text or json");
    ev->add_option("--report-out", e.report_out, "also write the report to this path");

    // curve ------------------------------------------------------------------
    auto* cv = app.add_subcommand("curve", "emit the loss-vs-likelihood curve as CSV");
    struct {
        double p_min = 0.001, p_max = 0.999, p_step = 0.001;
        std::string out;
    } c;
    detail::LossFlagSet closs;
    closs.add_to(cv);
    cv->add_option("--p-min", c.p_min, "grid start (exclusive of 0)");
    cv->add_option("--p-max", c.p_max, "grid end (exclusive of 1)");
    cv->add_option("--p-step", c.p_step, "grid step");
    cv->add_option("--out", c.out, "CSV output path (stdout when omitted)");

    // gradcheck --------------------------------------------------------------
    auto* gc = app.add_subcommand("gradcheck", "randomized finite-difference gradient check");
    struct {
        std::uint64_t seed = 7;
        int trials = 100;
        double fd_step = 1e-5, tolerance = 1e-5;
        bool corrupt = false;
    } q;
    detail::LossFlagSet qloss;
    qloss.add_to(gc);
    gc->add_option("--seed", q.seed, "instance seed");
    gc->add_option("--trials", q.trials, "random instances per run");
    gc->add_option("--fd-step", q.fd_step, "central-difference step");
    gc->add_flag("--corrupt", q.corrupt, "testing hook: perturb one analytic gradient entry");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h, out, err);
    } catch (const CLI::CallForAllHelp& h) {
        return app.exit(h, out, err);
    } catch (const CLI::ParseError& pe) {
        err << "error: " << pe.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            const IdentityDataset ds =
                gen_identities(g.identities, g.per_class, g.dim, g.noise, g.seed);
            write_dataset(g.data_out, ds);
            const PairList pl = make_pairs(ds, g.pairs, g.pair_seed);
            write_pairs(g.pairs_out, pl);
            out << "wrote " << g.data_out << " (" << ds.size() << " samples, " << ds.n_identities
                << " identities, dim " << ds.dim() << ")\n";
            out << "wrote " << g.pairs_out << " (" << pl.size() << " pairs)\n";
            return 0;
        }

        if (tr->parsed()) {
            TrainConfig cfg;
            if (!t.config.empty()) {
                std::ifstream f(t.config);
                if (!f)
                    throw std::runtime_error("cannot open config file " + t.config);
                apply_config_json(cfg, nlohmann::json::parse(f));
            }
            tloss.apply_given(cfg.loss);
            if (o_batch->count()) cfg.batch_size = t.batch_size;
            if (o_lr->count()) cfg.initial_lr = t.initial_lr;
            if (o_decay_epochs->count()) cfg.lr_decay_epochs = t.lr_decay_epochs;
            if (o_decay_factor->count()) cfg.lr_decay_factor = t.lr_decay_factor;
            if (o_epochs->count()) cfg.epochs = t.epochs;
            if (o_momentum->count()) cfg.momentum = t.momentum;
            if (o_wd->count()) cfg.weight_decay = t.weight_decay;
            if (o_seed->count()) cfg.seed = t.seed;
            if (o_hidden->count()) cfg.hidden_dims = t.hidden_dims;
            if (o_embed->count()) cfg.embedding_dim = t.embedding_dim;

            const IdentityDataset ds = read_dataset(t.data);
            const TrainResult result = train(cfg, ds);
            save_checkpoint(t.checkpoint_out, result.checkpoint);
            if (!t.log_out.empty())
                detail::write_text_file(t.log_out, detail::metrics_csv(result.log));
            for (const EpochMetrics& m : result.log) {
                out << "epoch " << m.epoch << " lr " << detail::fmt(m.lr) << " base_loss "
                    << detail::fmt(m.mean_base_loss);
                if (!std::isnan(m.mean_hm_loss)) out << " hm_loss " << detail::fmt(m.mean_hm_loss);
                if (!std::isnan(m.hard_fraction))
                    out << " hard_fraction " << detail::fmt(m.hard_fraction);
                out << "\n";
            }
            out << "wrote " << t.checkpoint_out << "\n";
            return 0;
        }

        if (ev->parsed()) {
            if (e.format != "text" && e.format != "json" && e.format != "json-like")
                throw std::invalid_argument("eval: --format must be text or json");
            const Checkpoint ckpt = load_checkpoint(e.checkpoint);
            const IdentityDataset ds = read_dataset(e.data);
            if (ds.dim() != ckpt.net.input_dim())
                throw format_error("eval: dataset dimension " + std::to_string(ds.dim()) +
                                   " does not match checkpoint input dimension " +
                                   std::to_string(ckpt.net.input_dim()));
            const PairList pl = read_pairs(e.pairs);
            for (const VerificationPair& p : pl.pairs)
                if (static_cast<std::size_t>(p.a) >= ds.size() ||
                    static_cast<std::size_t>(p.b) >= ds.size())
                    throw format_error("eval: pair file references sample indices beyond the dataset");
            const Matrix embeddings = forward(ckpt.net, ds.samples).embeddings.x;
            const VerificationReport report = evaluate_pairs(embeddings, pl, e.folds, e.fold_seed);
            const std::string text = e.format == "text"
                                         ? format_report_text(report)
                                         : detail::report_to_json(report).dump(2) + "\n";
            out << text;
            if (!e.report_out.empty()) detail::write_text_file(e.report_out, text);
            return 0;
        }

        if (cv->parsed()) {
            if (!(c.p_min > 0.0 && c.p_max < 1.0 && c.p_min <= c.p_max && c.p_step > 0.0))
                throw std::invalid_argument("curve: grid must satisfy 0 < p-min <= p-max < 1, p-step > 0");
            LossSpec spec;
            closs.apply_given(spec);
            const HardMiningParams& hm = spec.hard_mining;
            try {
                const double lstar = crossing_point(hm);
                out << "crossing_point=" << detail::fmt(lstar) << "\n";
                out << "crossing_probability=" << detail::fmt(std::exp(-lstar)) << "\n";
            } catch (const no_crossing_error&) {
                out << "crossing_point=none (alpha <= 1 or no positive fixed point)\n";
            }
            std::string csv = "p,L_base,L_hm\n";
            for (std::size_t i = 0;; ++i) {
                const double p = c.p_min + static_cast<double>(i) * c.p_step;
                if (p > c.p_max + 1e-12) break;
                const double base = -std::log(p);
                csv += detail::fmt(p);
                csv += ',';
                csv += detail::fmt(base);
                csv += ',';
                csv += detail::fmt(hard_mine(base, hm));
                csv += '\n';
            }
            if (c.out.empty())
                out << csv;
            else
                detail::write_text_file(c.out, csv);
            return 0;
        }

        if (gc->parsed()) {
            LossSpec spec;
            qloss.apply_given(spec);
            const GradCheckReport report =
                run_loss_gradcheck(spec, q.seed, q.trials, q.fd_step, q.corrupt);
            for (const GradCheckBlock& b : report.blocks)
                out << "block " << b.name << ": max_rel_err=" << detail::fmt(b.max_rel_err)
                    << "\n";
            const bool ok = report.passed(q.tolerance);
            out << "loss=" << (qloss.o_loss->count() ? qloss.loss : to_string(spec.kind))
                << " trials=" << report.trials << " resampled=" << report.resampled
                << " max_rel_err=" << detail::fmt(report.max_rel_err)
                << " tolerance=" << detail::fmt(q.tolerance) << " " << (ok ? "PASS" : "FAIL")
                << "\n";
            return ok ? 0 : 3;
        }
    } catch (const std::invalid_argument& ex) {
        err << "error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 3;
    }
    err << "error: no subcommand\n";
    return 2;
}

} // namespace hmloss::cli
