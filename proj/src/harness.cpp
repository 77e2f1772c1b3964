#include "siss/harness.hpp"

#include "siss/scalability.hpp"
#include "siss/synthesis.hpp"
#include "siss/verifier.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace siss {

using nlohmann::json;

// ---------------------------------------------------------------- disturbances

void DisturbanceSpec::validate() const
{
    if (amplitude < 0.0)
        throw ConfigError("disturbance amplitude must be non-negative");
    if (kind == Kind::Sinusoid && !(frequency > 0.0))
        throw ConfigError("sinusoid frequency must be positive");
    if (duration_steps < 0 || component < 0)
        throw ConfigError("disturbance duration and component must be non-negative");
}

DisturbanceSpec DisturbanceSpec::parse(const std::string& text)
{
    DisturbanceSpec d;
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ':');)
        parts.push_back(item);
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == 0)
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("cannot read a number from '" + s + "' in disturbance '" + text + "'");
        }
    };
    if (parts.empty() || parts[0] == "zero") {
        d.kind = Kind::Zero;
    } else if (parts[0] == "sin" && (parts.size() == 3 || parts.size() == 4)) {
        d.kind = Kind::Sinusoid;
        std::string f = parts[1];
        if (f.size() > 2 && (f.substr(f.size() - 2) == "Hz" || f.substr(f.size() - 2) == "hz"))
            f.resize(f.size() - 2);
        d.frequency = number(f);
        d.amplitude = number(parts[2]);
        if (parts.size() == 4)
            d.duration_steps = static_cast<int>(number(parts[3]));
    } else if (parts[0] == "pulse" && parts.size() == 3) {
        d.kind = Kind::Pulse;
        d.amplitude = number(parts[1]);
        d.duration_steps = static_cast<int>(number(parts[2]));
    } else {
        throw ConfigError("unknown disturbance '" + text + "'");
    }
    d.validate();
    return d;
}

Vec DisturbanceSpec::value(const Scenario& s, AgentId i, int step) const
{
    Vec d = Vec::Zero(s.disturbance_dim(i));
    if (kind == Kind::Zero || d.size() == 0)
        return d;
    const bool targeted = targets.empty() ? i == 0 : std::find(targets.begin(), targets.end(), i) != targets.end();
    if (!targeted)
        return d;
    if (component >= d.size())
        throw ConfigError("disturbance component out of range");
    if (kind == Kind::Sinusoid) {
        if (duration_steps == 0 || step < duration_steps)
            d[component] = amplitude * std::sin(2.0 * M_PI * frequency * step * s.T);
    } else if (step < duration_steps) {
        d[component] = amplitude;
    }
    return d;
}

PolicySource parse_policy_source(const std::string& text)
{
    if (text == "bundle")
        return PolicySource::Bundle;
    if (text == "reference")
        return PolicySource::Reference;
    if (text == "none")
        return PolicySource::None;
    throw ConfigError("unknown policy source '" + text + "'");
}

// ---------------------------------------------------------------- simulation

void TrajectoryLog::write_csv(std::ostream& os) const
{
    os << "step,agent,dim,value,disturbance,input\n";
    for (std::size_t k = 0; k < states.size(); ++k) {
        for (std::size_t i = 0; i < states[k].size(); ++i) {
            const Vec& x = states[k][i];
            const bool has_next = k < disturbances.size();
            for (int d = 0; d < x.size(); ++d) {
                const double dist = has_next && d < disturbances[k][i].size() ? disturbances[k][i][d] : 0.0;
                const double in = has_next && d < inputs[k][i].size() ? inputs[k][i][d] : 0.0;
                os << k << ',' << i << ',' << d << ',' << x[d] << ',' << dist << ',' << in << '\n';
            }
        }
    }
}

TrajectoryLog simulate(const Scenario& s, const CertificateBundle* bundle, const DisturbanceSpec& dist,
                       const SimulationOptions& opt, const std::vector<Vec>& initial)
{
    dist.validate();
    const int n = s.n_agents();
    if (opt.steps < 0)
        throw ConfigError("simulation horizon must be non-negative");
    if ((opt.policy == PolicySource::Bundle || opt.surrogate_rollout) && !bundle)
        throw ConfigError("simulation needs a certificate bundle");
    if (bundle && bundle->n_agents() != n)
        throw StructuralError("bundle and scenario have different agent counts");

    TrajectoryLog log;
    log.scenario_hash = s.hash;
    log.bundle_hash = bundle ? bundle->digest() : std::string();
    log.seed = opt.seed;
    std::vector<Vec> x(n);
    for (int i = 0; i < n; ++i) {
        x[i] = initial.empty() ? Vec::Zero(s.state_dim(i)) : initial.at(i);
        if (x[i].size() != s.state_dim(i))
            throw StructuralError("initial state of agent " + std::to_string(i) + " has the wrong dimension");
    }
    log.states.push_back(x);

    for (int k = 0; k < opt.steps; ++k) {
        std::vector<Vec> u(n), d(n);
        for (int i = 0; i < n; ++i) {
            d[i] = dist.value(s, i, k);
            Vec y(s.state_dim(i));
            y = x[i];
            for (AgentId j : s.graph.neighbors(i)) {
                Vec grown(y.size() + x[j].size());
                grown << y, x[j];
                y = grown;
            }
            if (!s.controlled(i)) {
                u[i] = Vec();
            } else if (opt.policy == PolicySource::Bundle) {
                const auto& c = bundle->controllers.at(i);
                if (!c)
                    throw StructuralError("bundle has no controller for controlled agent " + std::to_string(i));
                u[i] = c->act(y);
            } else if (opt.policy == PolicySource::Reference) {
                u[i] = reference_policy(s, i, y);
            } else {
                u[i] = Vec::Zero(s.input_dim(i));
            }
        }
        std::vector<Vec> next(n);
        if (opt.surrogate_rollout) {
            for (int i = 0; i < n; ++i) {
                const LocalLayout lay = local_layout(s, i);
                Vec z(lay.total + u[i].size());
                z.head(s.state_dim(i)) = x[i];
                int off = s.state_dim(i);
                for (AgentId j : s.graph.neighbors(i)) {
                    z.segment(off, x[j].size()) = x[j];
                    off += static_cast<int>(x[j].size());
                }
                z.segment(off, d[i].size()) = d[i];
                z.tail(u[i].size()) = u[i];
                next[i] = bundle->surrogates.at(bundle->surrogate_of.at(i)).predict(z);
            }
        } else {
            next = step_true(s, x, u, d);
        }
        for (int i = 0; i < n; ++i)
            if (!next[i].allFinite() || next[i].cwiseAbs().maxCoeff() > 1e6)
                throw NumericError("simulation diverged at step " + std::to_string(k + 1));
        log.disturbances.push_back(d);
        log.inputs.push_back(u);
        x = next;
        log.states.push_back(x);
    }
    return log;
}

double error_gain(const TrajectoryLog& log, const SystemGraph& graph, int signal)
{
    const int n = graph.size();
    if (graph.adjacency() != SystemGraph::chain(n).adjacency())
        throw StructuralError("error gain is defined for chain topologies only");
    std::vector<double> norms(n, 0.0);
    for (const auto& row : log.states) {
        if (static_cast<int>(row.size()) != n)
            throw StructuralError("trajectory and graph sizes differ");
        for (int i = 0; i < n; ++i) {
            if (signal < 0 || signal >= row[i].size())
                throw StructuralError("error-gain signal index out of range");
            norms[i] += row[i][signal] * row[i][signal];
        }
    }
    double gain = 0.0;
    for (int i = 1; i < n; ++i) {
        const double den = std::sqrt(norms[i - 1]);
        if (den < 1e-12)
            continue;
        gain = std::max(gain, std::sqrt(norms[i]) / den);
    }
    return gain;
}

AuditResult composite_lyapunov_audit(const TrajectoryLog& log, const CertificateBundle& b, bool surrogate_rollout)
{
    const int n = b.n_agents();
    double slack = 0.0;
    if (!surrogate_rollout)
        for (const auto& m : b.margins)
            slack = std::max(slack, m.lipschitz_v * m.epsilon);
    const double contraction = 1.0 - b.coupling.epsilon_sg;
    auto composite = [&](const std::vector<Vec>& xs) {
        double v = 0.0;
        for (int i = 0; i < n; ++i)
            v = std::max(v, b.lyapunov[i].value(xs[i]));
        return v;
    };
    AuditResult res;
    for (int k = 0; k < log.steps(); ++k) {
        bool inside = true;
        double dmax = 0.0;
        for (int i = 0; i < n && inside; ++i) {
            inside = b.state_regions[i].contains(log.states[k][i], 1e-12) &&
                     b.disturbance_regions[i].contains(log.disturbances[k][i], 1e-12);
            dmax = std::max(dmax, log.disturbances[k][i].norm());
        }
        if (!inside) {
            ++res.steps_skipped;
            continue;
        }
        ++res.steps_checked;
        const double excess =
            composite(log.states[k + 1]) - contraction * composite(log.states[k]) - b.psi * dmax - slack;
        res.max_violation = std::max(res.max_violation, excess);
    }
    return res;
}

// ---------------------------------------------------------------- parameter-affine support

namespace {

json add_scaled(const json& a, const json& b, double s)
{
    if (a.is_number())
        return a.get<double>() + s * b.get<double>();
    json out = json::array();
    for (std::size_t k = 0; k < a.size(); ++k)
        out.push_back(add_scaled(a[k], b[k], s));
    return out;
}

json scale_all(const json& a, double s)
{
    if (a.is_number())
        return s * a.get<double>();
    json out = json::array();
    for (const auto& e : a)
        out.push_back(scale_all(e, s));
    return out;
}

}  // namespace

Scenario scenario_at(const Scenario& base, const Vec& chi)
{
    const json& spec = base.raw.at("parameter_affine");
    json cfg = base.raw;
    for (const auto& [role, def] : spec.at("roles").items()) {
        json dyn = def.value("offset", json::object());
        const json& basis = def.at("basis");
        if (static_cast<int>(basis.size()) != chi.size())
            throw StructuralError("parameter vector length does not match the affine basis");
        for (std::size_t k = 0; k < basis.size(); ++k) {
            for (const auto& [field, mat] : basis[k].items()) {
                const double c = chi[static_cast<int>(k)];
                dyn[field] = dyn.contains(field) ? add_scaled(dyn[field], mat, c) : scale_all(mat, c);
            }
        }
        cfg["params"]["roles"][role] = dyn;
    }
    return parse_scenario(cfg);
}

CertificateBundle exact_linear_bundle(const Scenario& s, const CertificateBundle& base, double slack)
{
    if (s.kind != ScenarioKind::Linear)
        throw StructuralError("parameter-affine verification needs a linear scenario");
    CertificateBundle b = base;
    b.surrogates.clear();
    b.surrogate_of.clear();
    for (AgentId i = 0; i < s.n_agents(); ++i) {
        const auto& L = s.linear.at(s.role(i));
        const LocalLayout lay = local_layout(s, i);
        Mat a = Mat::Zero(s.state_dim(i), lay.total + s.input_dim(i));
        a.leftCols(s.state_dim(i)) = L.a_self;
        for (std::size_t k = 0; k < lay.neighbor_offsets.size(); ++k)
            a.block(0, lay.neighbor_offsets[k], s.state_dim(i), lay.neighbor_dims[k]) = L.a_nbr;
        a.block(0, lay.disturbance_offset, s.state_dim(i), lay.disturbance_dim) = L.b_d;
        a.rightCols(s.input_dim(i)) = L.b_u;
        SurrogateModel m;
        m.net = SurrogateNet(a, Vec::Zero(a.rows()), MlpNetwork(), true);
        m.lipschitz_true = m.lipschitz_surrogate = m.net.lipschitz_bound();
        m.key = "exact";
        b.surrogates.push_back(m);
        b.surrogate_of.push_back(i);
        b.margins[i] = robust_delta(0.0, b.lyapunov[i].lipschitz_bound(), slack);
    }
    return b;
}

// ---------------------------------------------------------------- CLI

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in '" + path + "': " + e.what());
    }
}

void write_json(const std::string& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw ConfigError("cannot write '" + path + "'");
    out << j.dump(1) << '\n';
}

std::uint64_t seed_override(std::uint64_t fallback)
{
    if (const char* s = std::getenv("SISS_SEED"))
        return std::strtoull(s, nullptr, 10);
    return fallback;
}

}  // namespace

FitConfig fit_config_of(const json& cfg)
{
    FitConfig f;
    const json j = cfg.value("fit", json::object());
    f.hidden = j.value("hidden", f.hidden);
    f.epochs = j.value("epochs", f.epochs);
    f.batch_size = j.value("batch_size", f.batch_size);
    f.learning_rate = j.value("learning_rate", f.learning_rate);
    f.decay = j.value("decay", f.decay);
    f.decay_every = j.value("decay_every", f.decay_every);
    f.max_train_points = j.value("max_train_points", f.max_train_points);
    f.train_fraction = j.value("train_fraction", f.train_fraction);
    f.anchored = j.value("anchored", f.anchored);
    f.seed = seed_override(j.value("seed", f.seed));
    return f;
}

TrainingConfig training_config_of(const json& cfg)
{
    TrainingConfig t = TrainingConfig::from_json(cfg.value("training", json::object()));
    t.seed = seed_override(t.seed);
    return t;
}

namespace {

json surrogates_to_json(const SurrogateSet& set)
{
    json models = json::array();
    for (const auto& m : set.models)
        models.push_back(m.to_json());
    return {{"models", models}, {"model_of", set.model_of}};
}

SurrogateSet surrogates_from_json(const json& j)
{
    SurrogateSet set;
    for (const auto& m : j.at("models"))
        set.models.push_back(SurrogateModel::from_json(m));
    set.model_of = j.at("model_of").get<std::vector<int>>();
    return set;
}

SurrogateSet obtain_surrogates(const Scenario& s, const json& cfg, const std::string& path)
{
    if (!path.empty())
        return surrogates_from_json(read_json(path));
    return fit_surrogates(s, fit_config_of(cfg));
}

json bundle_file(const CertificateBundle& b, const Scenario& s)
{
    json j = b.to_json();
    j["scenario"] = s.raw;
    return j;
}

Scenario scenario_of(const json& bundle_json, const std::string& config_path)
{
    if (!config_path.empty())
        return parse_scenario(read_json(config_path));
    if (!bundle_json.contains("scenario"))
        throw ConfigError("bundle carries no scenario; pass --config");
    return parse_scenario(bundle_json["scenario"]);
}

SignedGraph signed_graph(const Scenario& s) { return {s.graph, dynamics_signatures(s)}; }

int run_fit(const std::string& config, const std::string& out)
{
    const json cfg = read_json(config);
    const Scenario s = parse_scenario(cfg);
    const SurrogateSet set = fit_surrogates(s, fit_config_of(cfg));
    write_json(out, surrogates_to_json(set));
    json summary = json::array();
    for (const auto& m : set.models)
        summary.push_back({{"key", m.key},
                           {"epsilon_hat", m.epsilon_hat},
                           {"lipschitz_surrogate", m.lipschitz_surrogate},
                           {"grid_points", m.grid.point_count()}});
    std::cout << json{{"surrogates", summary}}.dump(1) << '\n';
    return kExitOk;
}

int run_train(const std::string& config, const std::string& surrogates, const std::string& out, int rounds)
{
    const json cfg = read_json(config);
    const Scenario s = parse_scenario(cfg);
    const TrainingConfig tc = training_config_of(cfg);
    CertificateBundle b = initial_bundle(s, obtain_surrogates(s, cfg, surrogates), tc);
    Dataset data = sample_dataset(b, tc);
    const ParameterMap map(b);
    Adam adam(map.size(), tc.learning_rate);
    std::mt19937_64 rng(tc.seed);
    LossBreakdown loss;
    for (int r = 0; r < rounds; ++r)
        loss = train_epochs(b, s, data, tc, tc.epochs_per_round, rng, adam, map);
    update_margins(b, s, tc);
    write_json(out, bundle_file(b, s));
    std::cout << json{{"loss_positivity", loss.positivity},
                      {"loss_decrement", loss.decrement},
                      {"loss_imitation", loss.imitation},
                      {"loss_total", loss.total}}
                     .dump(1)
              << '\n';
    return kExitOk;
}

int run_cegis(const std::string& config, const std::string& surrogates, const std::string& out, std::string log_path)
{
    const json cfg = read_json(config);
    const Scenario s = parse_scenario(cfg);
    const TrainingConfig tc = training_config_of(cfg);
    CertificateBundle b = initial_bundle(s, obtain_surrogates(s, cfg, surrogates), tc);
    if (log_path.empty())
        log_path = out + ".rounds.csv";
    std::ofstream log(log_path);
    const CegisResult res = cegis(s, std::move(b), tc, &log);
    write_json(out, bundle_file(res.bundle, s));
    json cex = to_json(res.last_verification).at("counterexamples");
    std::cout << json{{"verified", res.verified},
                      {"training_rounds", res.training_rounds},
                      {"counterexamples", cex},
                      {"log", log_path}}
                     .dump(1)
              << '\n';
    return res.verified ? kExitOk : kExitFailure;
}

int run_verify(const std::string& bundle_path, const std::string& out, bool reduce, const std::string& write_back,
               int threads, const std::vector<int>& trusted)
{
    json bj = read_json(bundle_path);
    CertificateBundle b = CertificateBundle::from_json(bj);
    VerifyBudget budget;
    if (bj.contains("scenario") && bj["scenario"].contains("training") &&
        bj["scenario"]["training"].contains("budget"))
        budget = TrainingConfig::from_json(bj["scenario"]["training"]).budget;
    std::vector<int> reps;
    if (reduce) {
        const Scenario s = scenario_of(bj, "");
        std::vector<std::string> keys;
        for (int i = 0; i < b.n_agents(); ++i)
            keys.push_back(b.surrogates[b.surrogate_of[i]].key);
        reps = minimum_verification_network({s.graph, dynamics_signatures(s, &keys)}, {}, {}).representatives;
    }
    const SystemVerification v = verify_system(b, budget, reduce ? &reps : nullptr, threads, trusted.empty() ? nullptr : &trusted);
    json result = to_json(v);
    if (!out.empty())
        write_json(out, result);
    if (!write_back.empty()) {
        json updated = b.to_json();
        if (bj.contains("scenario"))
            updated["scenario"] = bj["scenario"];
        write_json(write_back, updated);
    }
    std::cout << json{{"verified", v.verified},
                      {"queries_executed", v.queries_executed},
                      {"counterexamples", result["counterexamples"]}}
                     .dump(1)
              << '\n';
    return v.verified ? kExitOk : kExitFailure;
}

int run_reduce(const std::string& scenario_path, const std::string& library_dir, const std::vector<int>& verified)
{
    const Scenario s = parse_scenario(read_json(scenario_path));
    std::vector<VerifiedTemplate> library;
    if (!library_dir.empty()) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(library_dir))
            if (entry.path().extension() == ".json")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            json j = read_json(f.string());
            const Scenario t = parse_scenario(j.contains("scenario") ? j["scenario"] : j);
            library.push_back({f.stem().string(), signed_graph(t)});
        }
    }
    const Reduction red = minimum_verification_network(signed_graph(s), library, verified);
    json j = red.to_json();
    j["queries"] = 3 * red.representatives.size();
    j["full_queries"] = 3 * s.n_agents();
    std::cout << j.dump(1) << '\n';
    return kExitOk;
}

std::vector<Vec> read_points(const json& j)
{
    const json& arr = j.is_object() ? j.at("points") : j;
    std::vector<Vec> pts;
    for (const auto& p : arr)
        pts.push_back(vec_from_json(p));
    return pts;
}

int run_hull(const std::string& points_path, const std::string& bundle_path, const std::string& query_path,
             const std::string& out, int threads)
{
    const json bj = read_json(bundle_path);
    const CertificateBundle base = CertificateBundle::from_json(bj);
    const Scenario s = scenario_of(bj, "");
    const TrainingConfig tc = training_config_of(s.raw);
    auto verify_at = [&](const Vec& chi) {
        CertificateBundle b = exact_linear_bundle(scenario_at(s, chi), base, tc.delta_slack);
        return verify_system(b, tc.budget, nullptr, threads).verified;
    };
    const CertifiedPolytope poly = certify_polytope(read_points(read_json(points_path)), verify_at);
    json j = poly.to_json();
    if (!query_path.empty()) {
        json answers = json::array();
        for (const Vec& chi : read_points(read_json(query_path))) {
            const bool inside = !poly.degenerate && hull_membership(poly, chi);
            const bool ok = inside || verify_at(chi);
            answers.push_back({{"chi", vec_to_json(chi)}, {"inside", inside}, {"certified", ok}});
        }
        j["queries"] = answers;
    }
    if (!out.empty())
        write_json(out, j);
    std::cout << j.dump(1) << '\n';
    return poly.degenerate ? kExitFailure : kExitOk;
}

int run_simulate(const std::string& bundle_path, const std::string& config_path, const std::string& disturbance,
                 const std::string& policy, int steps, const std::string& csv, bool surrogate, int signal)
{
    std::optional<CertificateBundle> b;
    json bj;
    if (!bundle_path.empty()) {
        bj = read_json(bundle_path);
        b = CertificateBundle::from_json(bj);
    }
    const Scenario s = b ? scenario_of(bj, config_path) : parse_scenario(read_json(config_path));
    SimulationOptions opt;
    opt.policy = parse_policy_source(policy.empty() ? (b ? "bundle" : "reference") : policy);
    opt.steps = steps;
    opt.surrogate_rollout = surrogate;
    opt.seed = seed_override(0);
    const TrajectoryLog log = simulate(s, b ? &*b : nullptr, DisturbanceSpec::parse(disturbance), opt);
    if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out)
            throw ConfigError("cannot write '" + csv + "'");
        log.write_csv(out);
    }
    json summary{{"steps", log.steps()}, {"agents", s.n_agents()}};
    if (signal < 0 && s.kind == ScenarioKind::Platoon)
        signal = 1;
    if (s.graph.adjacency() == SystemGraph::chain(s.n_agents()).adjacency() && signal >= 0)
        summary["error_gain"] = error_gain(log, s.graph, signal);
    std::cout << summary.dump(1) << '\n';
    return kExitOk;
}

int run_audit(const std::string& bundle_path, int rollouts, int steps, bool true_dynamics,
              const std::string& disturbance)
{
    const json bj = read_json(bundle_path);
    const CertificateBundle b = CertificateBundle::from_json(bj);
    const Scenario s = scenario_of(bj, "");
    std::mt19937_64 rng(seed_override(0));
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    SimulationOptions opt;
    opt.policy = PolicySource::Bundle;
    opt.steps = steps;
    opt.surrogate_rollout = !true_dynamics;
    const DisturbanceSpec dist = DisturbanceSpec::parse(disturbance);
    double worst = 0.0;
    int checked = 0;
    for (int r = 0; r < rollouts; ++r) {
        std::vector<Vec> init;
        for (int i = 0; i < s.n_agents(); ++i) {
            const HyperBox& R = b.state_regions[i];
            Vec x(R.dim());
            for (int d = 0; d < R.dim(); ++d)
                x[d] = R.center()[d] + u(rng) * R.width()[d];
            init.push_back(x);
        }
        const AuditResult a = composite_lyapunov_audit(simulate(s, &b, dist, opt, init), b, !true_dynamics);
        worst = std::max(worst, a.max_violation);
        checked += a.steps_checked;
    }
    std::cout << json{{"max_violation", worst}, {"steps_checked", checked}}.dump(1) << '\n';
    return worst <= 1e-9 ? kExitOk : kExitFailure;
}

}  // namespace

int cli_dispatch(int argc, char** argv)
{
    CLI::App app{"Neural sISS certificate synthesis and verification"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = automatic)");

    std::string config, out, surrogates, log_path, bundle, library, points, query, disturbance = "zero", policy, csv,
                                                                               write_back;
    int rounds = 1, steps = 1500, signal = -1, rollouts = 10;
    bool reduce = false, surrogate = false, true_dynamics = false;
    std::vector<int> verified;

    auto* fit = app.add_subcommand("fit", "Fit surrogate dynamics");
    fit->add_option("--config", config)->required();
    fit->add_option("--out", out)->required();

    auto* train = app.add_subcommand("train", "Train certificates without verification");
    train->add_option("--config", config)->required();
    train->add_option("--surrogates", surrogates);
    train->add_option("--out", out)->required();
    train->add_option("--rounds", rounds);

    auto* cg = app.add_subcommand("cegis", "Counterexample-guided synthesis");
    cg->add_option("--config", config)->required();
    cg->add_option("--surrogates", surrogates);
    cg->add_option("--out", out)->required();
    cg->add_option("--log", log_path, "Per-round CSV (default <out>.rounds.csv)");

    auto* ver = app.add_subcommand("verify", "Verify a certificate bundle");
    ver->add_option("--bundle", bundle)->required();
    ver->add_option("--out", out);
    ver->add_flag("--reduce", reduce, "Verify representatives only and transfer identical queries");
    ver->add_option("--write", write_back, "Write the bundle with updated statuses");
    ver->add_option("--trusted", verified, "Agents whose recorded statuses are kept (verified decomposable subsystem)");

    auto* red = app.add_subcommand("reduce", "Minimum verification network");
    red->add_option("--scenario", config)->required();
    red->add_option("--library", library);
    red->add_option("--verified", verified, "Agents of an already verified subsystem");

    auto* hull = app.add_subcommand("hull", "Certified parameter polytope");
    hull->add_option("--points", points)->required();
    hull->add_option("--bundle", bundle)->required();
    hull->add_option("--query", query);
    hull->add_option("--out", out);

    auto* sim = app.add_subcommand("simulate", "Closed-loop simulation");
    sim->add_option("--bundle", bundle);
    sim->add_option("--config", config);
    sim->add_option("--disturbance", disturbance);
    sim->add_option("--policy", policy, "bundle, reference or none");
    sim->add_option("--steps", steps);
    sim->add_option("--csv", csv);
    sim->add_flag("--surrogate", surrogate);
    sim->add_option("--gain-signal", signal, "State component for the chain error gain (platoon default: velocity)");

    auto* aud = app.add_subcommand("audit", "Composite Lyapunov audit on rollouts");
    aud->add_option("--bundle", bundle)->required();
    aud->add_option("--rollouts", rollouts);
    aud->add_option("--steps", steps);
    aud->add_flag("--true-dynamics", true_dynamics);
    aud->add_option("--disturbance", disturbance);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*fit)
            return run_fit(config, out);
        if (*train)
            return run_train(config, surrogates, out, rounds);
        if (*cg)
            return run_cegis(config, surrogates, out, log_path);
        if (*ver)
            return run_verify(bundle, out, reduce, write_back, threads, verified);
        if (*red)
            return run_reduce(config, library, verified);
        if (*hull)
            return run_hull(points, bundle, query, out, threads);
        if (*sim) {
            if (bundle.empty() && config.empty())
                throw ConfigError("simulate needs --bundle or --config");
            return run_simulate(bundle, config, disturbance, policy, steps, csv, surrogate, signal);
        }
        if (*aud)
            return run_audit(bundle, rollouts, steps, true_dynamics, disturbance);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const StructuralError& e) {
        std::cerr << "structural error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace siss
