#include "commands.hpp"

#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "kpreg/error.hpp"
#include "kpreg/io.hpp"
#include "kpreg/metrics.hpp"
#include "kpreg/parallel.hpp"

namespace kpreg::cli {

using nlohmann::json;

void RunManifest::validate() const {
    optimizer.validate();
    PckConfig{alpha}.validate();
    if (pairs == 0) throw ConfigInvalidError("--pairs must be positive");
}

namespace {

json manifest_echo(const RunManifest &m) {
    return {{"command", m.command},
            {"loss", to_string(m.loss)},
            {"direction", to_string(m.direction)},
            {"model", to_string(m.model)},
            {"learning_rate", m.optimizer.learning_rate},
            {"max_iters", m.optimizer.max_iters},
            {"rotation_starts", m.optimizer.rotation_starts},
            {"alpha", m.alpha},
            {"seed", m.seed},
            {"input", m.input}};
}

void require_path(const std::string &path, const char *flag) {
    if (path.empty()) throw ConfigInvalidError(std::string(flag) + " is required");
}

ResultsFile build_results(const RunManifest &m, std::span<const PairSample> samples,
                          std::vector<RegistrationResult> regs) {
    ResultsFile r;
    r.config = manifest_echo(m);
    r.alpha = m.alpha;
    const PckConfig pck_cfg{m.alpha};
    std::vector<RegistrationResult> scored;
    std::vector<PairSample> scored_samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        PairResult pr;
        pr.pair_id = samples[i].pair_id;
        pr.category = samples[i].category;
        if (samples[i].correspondence && !samples[i].correspondence->empty()) {
            pr.pck = pck(regs[i].theta_ab, samples[i].source, samples[i].target, *samples[i].correspondence, pck_cfg);
            scored.push_back(regs[i]);
            scored_samples.push_back(samples[i]);
        }
        pr.registration = std::move(regs[i]);
        r.pairs.push_back(std::move(pr));
    }
    if (!scored.empty()) r.report = evaluate_batch(scored, scored_samples, pck_cfg);
    return r;
}

void write_loss_series(const std::string &path, const ResultsFile &r) {
    std::ostringstream s;
    s << "pair_id\titeration\tloss\n" << std::setprecision(17);
    for (const auto &p : r.pairs) {
        for (std::size_t i = 0; i < p.registration.loss_trace.size(); ++i) {
            s << p.pair_id << '\t' << i << '\t' << p.registration.loss_trace[i] << '\n';
        }
    }
    write_text_file(path, s.str());
}

void print_summary(std::ostream &out, const ResultsFile &r) {
    out << "pairs: " << r.pairs.size() << "  evaluated: " << r.report.per_pair.size() << "  mean PCK@" << r.alpha
        << ": " << std::fixed << std::setprecision(4) << r.report.mean << '\n';
    for (const auto &[cat, v] : r.report.per_category) out << "  " << cat << ": " << v << '\n';
    out.unsetf(std::ios::fixed);
}

Transform random_transform(Model model, Rng &rng) {
    auto random_affine = [&] {
        AffineParams a;
        for (double *v : {&a.a11, &a.a12, &a.tx, &a.a21, &a.a22, &a.ty}) *v += rng.uniform(-0.3, 0.3);
        return Transform::affine(a);
    };
    auto random_tps = [&] {
        TpsParams t;
        for (auto &d : t.displacements) d = rng.uniform(-0.1, 0.1);
        return Transform::tps(t);
    };
    switch (model) {
    case Model::affine: return random_affine();
    case Model::tps: return random_tps();
    case Model::affine_tps: return compose(random_tps(), random_affine());
    }
    return Transform::identity();
}

constexpr double kGeneralPosition = 5e-2;

PairSample random_pair(Rng &rng) {
    PairSample s;
    s.pair_id = "gradcheck";
    const std::size_t m = 3 + rng.index(8);
    const std::size_t n = 3 + rng.index(8);
    for (std::size_t i = 0; i < m; ++i) s.source.push_back({rng.uniform(), rng.uniform()});
    for (std::size_t i = 0; i < n; ++i) s.target.push_back({rng.uniform(), rng.uniform()});
    return s;
}

} // namespace

int cmd_register(const RunManifest &m, std::ostream &out) {
    require_path(m.input, "--input");
    require_path(m.output, "--output");
    const std::vector<PairSample> samples = load_dataset(m.input);
    std::vector<RegistrationResult> regs = register_batch(samples, {m.loss, m.direction}, m.optimizer);
    const ResultsFile r = build_results(m, samples, std::move(regs));
    save_results(r, m.output);
    if (!m.series.empty()) write_loss_series(m.series, r);
    print_summary(out, r);
    return kOk;
}

int cmd_eval(const RunManifest &m, std::ostream &out) {
    require_path(m.input, "--input");
    require_path(m.results, "--results");
    const std::vector<PairSample> samples = load_dataset(m.input);
    const ResultsFile prior = load_results(m.results);
    if (prior.pairs.size() != samples.size()) {
        throw ValidationError("results file has " + std::to_string(prior.pairs.size()) + " pairs, dataset has " +
                              std::to_string(samples.size()));
    }
    std::vector<RegistrationResult> regs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (prior.pairs[i].pair_id != samples[i].pair_id) {
            throw ValidationError("pair order differs at '" + samples[i].pair_id + "'");
        }
        regs.push_back(prior.pairs[i].registration);
    }
    ResultsFile r = build_results(m, samples, std::move(regs));
    r.config = prior.config;
    r.config["eval_alpha"] = m.alpha;
    if (!m.output.empty()) save_results(r, m.output);
    print_summary(out, r);
    return kOk;
}

int cmd_synth(const RunManifest &m, std::ostream &out) {
    require_path(m.output, "--output");
    const std::vector<PairSample> samples = generate_batch(regime_config(m.regime, m.seed), m.pairs);
    save_dataset(samples, m.output);
    out << "wrote " << samples.size() << ' ' << to_string(m.regime) << " pairs to " << m.output << '\n';
    return kOk;
}

int cmd_gradcheck(const RunManifest &m, std::ostream &out) {
    Rng rng(m.seed);
    const std::size_t instances = m.pairs;
    std::size_t total = 0, failed = 0;
    double worst = 0.0;
    bool fault_pending = m.inject_fault;
    for (LossFamily family : {LossFamily::nn, LossFamily::cd, LossFamily::nn_cyc, LossFamily::cd_cyc}) {
        for (Direction dir : {Direction::forward, Direction::backward, Direction::symmetric}) {
            const LossSpec spec{family, dir};
            double spec_worst = 0.0;
            for (std::size_t i = 0; i < instances; ++i) {
                // redraw until every residual is clear of the norm's kink
                PairSample pair;
                Transform ab, ba;
                do {
                    pair = random_pair(rng);
                    ab = random_transform(m.model, rng);
                    ba = random_transform(m.model, rng);
                } while (smallest_residual(spec, ab, ba, pair.source, pair.target,
                                           compute_assignments(spec, ab, ba, pair.source, pair.target)) <
                         kGeneralPosition);
                GradientCheckOptions opts;
                if (fault_pending) {
                    opts.inject_fault = 0;
                    fault_pending = false;
                }
                const GradientReport rep = gradient_check(spec, pair, ab, ba, opts);
                total += rep.entries.size();
                spec_worst = std::max(spec_worst, rep.max_rel_error);
                for (const auto &e : rep.entries) {
                    if (!e.flagged) continue;
                    ++failed;
                    out << "FAIL " << to_string(family) << '/' << to_string(dir) << " instance " << i << ' '
                        << (e.backward ? "theta_ba" : "theta_ab") << '[' << e.index << "] analytic=" << e.analytic
                        << " numeric=" << e.numeric << " rel=" << e.rel_error << '\n';
                }
            }
            worst = std::max(worst, spec_worst);
            out << to_string(family) << '/' << to_string(dir) << ": max rel error " << std::scientific
                << std::setprecision(2) << spec_worst << '\n';
            out.unsetf(std::ios::scientific);
        }
    }
    out << total << " gradient entries checked (" << to_string(m.model) << " model), " << failed << " failed\n";
    return failed == 0 ? kOk : kNumeric;
}

std::vector<AblationCell> run_ablation(std::size_t pairs, std::uint64_t seed, const OptimizerConfig &cfg) {
    std::vector<AblationCell> cells;
    for (Regime regime : {Regime::easy, Regime::hard}) {
        const std::vector<PairSample> samples = generate_batch(regime_config(regime, seed), pairs);
        for (LossFamily loss : {LossFamily::nn, LossFamily::nn_cyc}) {
            const std::vector<RegistrationResult> regs = register_batch(samples, {loss, Direction::symmetric}, cfg);
            const PckReport rep = evaluate_batch(regs, samples, PckConfig{});
            cells.push_back({regime, loss, rep.mean, rep.per_pair});
        }
    }
    return cells;
}

int cmd_ablate(const RunManifest &m, std::ostream &out) {
    OptimizerConfig cfg = m.optimizer;
    cfg.stage_schedule = {Stage::affine};
    const std::vector<AblationCell> cells = run_ablation(m.pairs, m.seed, cfg);

    json table = json::array();
    std::ostringstream series;
    series << "regime\tloss\tpair\tpck\n" << std::setprecision(17);
    for (const auto &c : cells) {
        table.push_back({{"regime", to_string(c.regime)},
                         {"loss", to_string(c.loss)},
                         {"mean_pck", c.mean_pck},
                         {"per_pair_pck", c.per_pair}});
        for (std::size_t i = 0; i < c.per_pair.size(); ++i) {
            series << to_string(c.regime) << '\t' << to_string(c.loss) << '\t' << i << '\t' << c.per_pair[i] << '\n';
        }
    }
    json config = manifest_echo(m);
    config["pairs"] = m.pairs;
    config.erase("loss");
    config.erase("direction");
    config.erase("model");
    config.erase("input");
    const json doc = {{"format_version", kFormatVersion}, {"config", config}, {"alpha", 0.1}, {"table", table}};

    if (!m.output.empty()) {
        write_text_file(m.output, doc.dump(2) + "\n");
        const std::string series_path = m.series.empty() ? m.output + ".series.tsv" : m.series;
        write_text_file(series_path, series.str());
    }

    out << "mean PCK@0.1 over " << m.pairs << " pairs per regime\n";
    out << std::left << std::setw(8) << "regime" << std::setw(10) << "nn" << "nn-cyc\n" << std::fixed
        << std::setprecision(4);
    for (std::size_t r = 0; r < 2; ++r) {
        out << std::setw(8) << to_string(cells[2 * r].regime) << std::setw(10) << cells[2 * r].mean_pck
            << cells[2 * r + 1].mean_pck << '\n';
    }
    out.unsetf(std::ios::fixed);
    return kOk;
}

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Keypoint set registration with nearest-neighbor, chamfer and cycle-consistency losses"};
    app.require_subcommand(1);

    RunManifest m;
    std::string loss = "nn-cyc", direction = "symmetric", model = "affine", regime = "easy";
    std::optional<std::size_t> pairs;

    auto add_fit_flags = [&](CLI::App *c) {
        c->add_option("--loss", loss, "nn | cd | nn-cyc | cd-cyc")->capture_default_str();
        c->add_option("--direction", direction, "forward | backward | symmetric")->capture_default_str();
        c->add_option("--model", model, "affine | tps | affine+tps")->capture_default_str();
        c->add_option("--lr", m.optimizer.learning_rate, "Adam learning rate")->capture_default_str();
        c->add_option("--max-iters", m.optimizer.max_iters, "iterations per stage")->capture_default_str();
        c->add_option("--starts", m.optimizer.rotation_starts, "rotation hypotheses per pair")->capture_default_str();
    };

    CLI::App *reg = app.add_subcommand("register", "fit every pair of a dataset and write a results file");
    add_fit_flags(reg);
    reg->add_option("--input", m.input, "dataset file")->required();
    reg->add_option("--output", m.output, "results file")->required();
    reg->add_option("--alpha", m.alpha, "PCK threshold")->capture_default_str();
    reg->add_option("--seed", m.seed, "recorded in the results file")->capture_default_str();
    reg->add_option("--series", m.series, "optional TSV of per-iteration losses");

    CLI::App *ev = app.add_subcommand("eval", "re-score a results file against its dataset");
    ev->add_option("--input", m.input, "dataset file")->required();
    ev->add_option("--results", m.results, "results file from 'register'")->required();
    ev->add_option("--output", m.output, "write the re-scored results here");
    ev->add_option("--alpha", m.alpha, "PCK threshold")->capture_default_str();

    CLI::App *syn = app.add_subcommand("synth", "write a synthetic dataset");
    syn->add_option("--regime", regime, "easy | hard")->capture_default_str();
    syn->add_option("--pairs", pairs, "number of pairs (default 100)");
    syn->add_option("--seed", m.seed, "generator seed")->capture_default_str();
    syn->add_option("--output", m.output, "dataset file")->required();

    CLI::App *gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    gc->add_option("--model", model, "affine | tps | affine+tps")->capture_default_str();
    gc->add_option("--seed", m.seed, "fixture seed")->capture_default_str();
    gc->add_option("--pairs", pairs, "random instances per loss form (default 20)");
    gc->add_flag("--inject-fault", m.inject_fault, "corrupt one analytic entry (test hook)")->group("");

    CLI::App *ab = app.add_subcommand("ablate", "NN vs NN-Cyc on easy and hard synthetic regimes");
    ab->add_option("--pairs", pairs, "pairs per regime (default 100)");
    ab->add_option("--seed", m.seed, "generator seed")->capture_default_str();
    ab->add_option("--lr", m.optimizer.learning_rate, "Adam learning rate")->capture_default_str();
    ab->add_option("--max-iters", m.optimizer.max_iters, "iterations per stage")->capture_default_str();
    ab->add_option("--starts", m.optimizer.rotation_starts, "rotation hypotheses per pair")->capture_default_str();
    ab->add_option("--output", m.output, "comparison table (JSON); series go to <output>.series.tsv");
    ab->add_option("--series", m.series, "override the series path");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        m.loss = parse_loss_family(loss);
        m.direction = parse_direction(direction);
        m.model = parse_model(model);
        m.optimizer.stage_schedule = stages_for(m.model);
        m.regime = parse_regime(regime);
        m.command = app.get_subcommands().front()->get_name();
        m.pairs = pairs.value_or(m.command == "gradcheck" ? 20 : 100);
        m.validate();

        if (m.command == "register") return cmd_register(m, out);
        if (m.command == "eval") return cmd_eval(m, out);
        if (m.command == "synth") return cmd_synth(m, out);
        if (m.command == "gradcheck") return cmd_gradcheck(m, out);
        if (m.command == "ablate") return cmd_ablate(m, out);
        err << "error: unknown command\n";
        return kUsage;
    } catch (const Error &e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.error_class());
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    }
}

} // namespace kpreg::cli
