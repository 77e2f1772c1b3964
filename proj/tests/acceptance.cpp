// Acceptance suite: one PASS/FAIL line per criterion.

#include "fixtures.hpp"
#include "orbits.hpp"
#include "synthesis_fixtures.hpp"

#include "siss/harness.hpp"
#include "siss/scalability.hpp"
#include "siss/synthesis.hpp"
#include "siss/verifier.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace siss;
using namespace siss::fixtures;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string config_path(const std::string& name) { return std::string(SISS_SOURCE_DIR) + "/configs/" + name; }

json load_config(const std::string& name)
{
    std::ifstream in(config_path(name));
    if (!in)
        throw ConfigError("missing config " + name);
    return json::parse(in);
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

Vec uniform_in(const HyperBox& box, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec p(box.dim());
    for (int d = 0; d < box.dim(); ++d)
        p[d] = box.lower()[d] + u(rng) * box.width()[d];
    return p;
}

CegisResult synthesize(const Scenario& s, const json& cfg, int threads)
{
    TrainingConfig tc = training_config_of(cfg);
    tc.threads = threads;
    const SurrogateSet set = fit_surrogates(s, fit_config_of(cfg));
    return cegis(s, initial_bundle(s, set, tc), tc);
}

// ---------------------------------------------------------------- 1

/// One agent with state dimension nx, a random stable-ish surrogate, a random V and a
/// random margin. The region is sized so that the lattice at step 1e-3 has at most
/// about 1e6 points over the domain of the chosen condition.
CertificateBundle random_instance(std::mt19937_64& rng, std::uint64_t seed, int nx, Condition c)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int k = c == Condition::Decrement ? nx + 1 : nx;
    const double hw = std::min(1.0, 0.5e-3 * std::pow(1e6, 1.0 / k));

    CertificateBundle b = scalar_bundle(0.5, 0.05 + 0.4 * u(rng), 0.1);
    b.state_dims = {nx};
    b.state_regions = {HyperBox::symmetric(Vec::Constant(nx, hw))};
    b.disturbance_regions = {HyperBox::symmetric(Vec::Constant(1, hw))};

    auto hidden = [&] {
        std::vector<int> w{nx};
        const int layers = 1 + static_cast<int>(u(rng) * 2.0);
        for (int l = 0; l < layers; ++l)
            w.push_back(4 + static_cast<int>(u(rng) * 13.0));
        return w;
    };
    std::vector<int> vw = hidden();
    vw.push_back(1);
    Mat r = Mat::Identity(nx, nx) * (0.2 + 1.3 * u(rng));
    b.lyapunov = {LyapunovNet(MlpNetwork::random(vw, seed), r)};

    Mat lin(nx, nx + 1);
    for (int i = 0; i < lin.rows(); ++i)
        for (int j = 0; j < lin.cols(); ++j)
            lin(i, j) = (u(rng) - 0.5) * 1.2;
    std::vector<int> sw = hidden();
    sw[0] = nx + 1;
    sw.push_back(nx);
    MlpNetwork residual = MlpNetwork::random(sw, seed + 1);
    SurrogateModel m;
    m.net = SurrogateNet(lin, Vec::Zero(nx), residual, true);
    m.grid.region = b.state_regions[0].product(b.disturbance_regions[0]);
    m.grid.steps = Vec::Constant(nx + 1, hw);
    b.surrogates = {m};
    b.margins[0].delta = u(rng) * 0.2 * hw;
    return b;
}

Outcome criterion_verifier_soundness()
{
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 3), cond(0, 2);
    int verified = 0, falsified = 0, unknown = 0, wrong = 0;
    VerifyBudget budget;
    budget.max_seconds = 60.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int nx = dim(rng);
        const Condition c = static_cast<Condition>(cond(rng));
        const CertificateBundle b = random_instance(rng, 1000 + trial, nx, c);
        const LocalQuery q = make_query(b, 0, c);
        const VerifyResult r = verify_query(q, budget);
        if (r.status == VerifyStatus::Verified) {
            ++verified;
            if (grid_max(q, 1e-3) > budget.tolerance)
                ++wrong;
        } else if (r.status == VerifyStatus::Falsified) {
            ++falsified;
            if (!r.counterexample || !(q.residual(r.counterexample->point) > 0.0))
                ++wrong;
        } else {
            ++unknown;
        }
    }
    return {wrong == 0, std::to_string(verified) + " verified, " + std::to_string(falsified) + " falsified, " +
                            std::to_string(unknown) + " unknown, " + std::to_string(wrong) + " unsound"};
}

// ---------------------------------------------------------------- 2

Outcome criterion_gradients()
{
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        json cfg = controlled_config(k % 2 == 0 ? "chain" : "ring");
        const bool controlled = k % 4 < 2;
        if (!controlled) {
            cfg["params"]["roles"]["a"].erase("b_u");
            cfg.erase("reference_policy");
        }
        const Scenario s = parse_scenario(cfg);
        FitConfig fc = small_fit();
        fc.seed = 10 + k;
        TrainingConfig tc = small_training();
        tc.seed = 100 + k;
        tc.convex = k % 3 == 0;
        tc.epsilon_sg = 0.02 + 0.01 * (k % 5);
        tc.core_fraction = k % 2 == 0 ? 0.0 : 0.2;
        tc.w_o = controlled ? 0.5 : 0.0;
        CertificateBundle b = initial_bundle(s, fit_surrogates(s, fc), tc);
        // Push the coupling off its initial value so rescaling is exercised.
        std::uniform_real_distribution<double> u(0.2, 1.5);
        for (int i = 0; i < b.n_agents(); ++i)
            for (int j = 0; j < b.n_agents(); ++j)
                if (b.coupling.mask[i][j])
                    b.coupling.gamma_pure(i, j) = u(rng);
        b.realize();
        const Batch batch = random_batch(b, 6, rng);
        worst = std::max(worst, gradient_error(b, s, batch, tc));
    }
    return {worst < 1e-4, "max relative error " + fmt(worst) + " over 20 configurations"};
}

// ---------------------------------------------------------------- 3

Outcome criterion_scalar_cegis(int threads)
{
    const json cfg = load_config("scalar.json");
    const Scenario s = parse_scenario(cfg);
    const CegisResult r = synthesize(s, cfg, threads);
    std::mt19937_64 rng(5);
    double worst = 0.0;
    SimulationOptions opt;
    opt.steps = 200;
    opt.surrogate_rollout = true;
    for (int k = 0; k < 10; ++k) {
        const std::vector<Vec> init{uniform_in(r.bundle.state_regions[0], rng)};
        const auto dist = DisturbanceSpec::parse("sin:" + fmt(0.1 + 0.05 * k) + "Hz:" + fmt(0.1 * (k + 1)));
        const TrajectoryLog log = simulate(s, &r.bundle, dist, opt, init);
        worst = std::max(worst, composite_lyapunov_audit(log, r.bundle, true).max_violation);
    }
    const bool pass = r.verified && r.training_rounds <= 20 && worst <= 1e-9;
    return {pass, std::string(r.verified ? "verified" : "not verified") + " after " +
                      std::to_string(r.training_rounds) + " training rounds, audit violation " + fmt(worst)};
}

// ---------------------------------------------------------------- 4

Outcome criterion_string_stability(int threads)
{
    const json cfg = load_config("platoon.json");
    const Scenario s = parse_scenario(cfg);
    const CegisResult r = synthesize(s, cfg, threads);
    const int velocity = 1;
    auto gain = [&](PolicySource p, double amplitude) {
        SimulationOptions opt;
        opt.policy = p;
        try {
            const auto log = simulate(s, &r.bundle, DisturbanceSpec::parse("sin:0.0667Hz:" + fmt(amplitude)), opt);
            return error_gain(log, s.graph, velocity);
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const double g4 = gain(PolicySource::Bundle, 4.0), g7 = gain(PolicySource::Bundle, 7.0);
    const double ref7 = gain(PolicySource::Reference, 7.0);
    double delta = 0.0;
    for (const auto& m : r.bundle.margins)
        delta = std::max(delta, m.delta);
    const bool pass = r.verified && g4 <= 1.0 + 1e-6 && g7 <= 1.0 + 1e-6 && ref7 > 1.0;
    return {pass, std::string(r.verified ? "verified" : "not verified") + " after " +
                      std::to_string(r.training_rounds) + " rounds (largest delta " + fmt(delta) + "); gain " + fmt(g4) + " (4), " + fmt(g7) +
                      " (7); reference " + fmt(ref7) + " (7)"};
}

// ---------------------------------------------------------------- 5

Outcome criterion_reduced_verification(int threads)
{
    FitConfig fc;
    fc.hidden = {8};
    fc.epochs = 1;
    fc.seed = 4;
    TrainingConfig tc;
    tc.lyapunov_hidden = {4};
    tc.controller_hidden = {4};
    tc.seed = 4;
    tc.threads = threads;
    VerifyBudget budget;
    budget.max_boxes = 50;
    budget.max_seconds = 1.0;

    std::vector<int> reps, reduced, full;
    for (const char* name : {"ring_platoon_10.json", "ring_platoon_50.json"}) {
        const Scenario s = parse_scenario(load_config(name));
        CertificateBundle b = initial_bundle(s, fit_surrogates(s, fc), tc);
        std::vector<std::string> keys;
        for (int i = 0; i < b.n_agents(); ++i)
            keys.push_back(b.surrogates[b.surrogate_of[i]].key);
        const Reduction red =
            minimum_verification_network({s.graph, dynamics_signatures(s, &keys)}, {}, {});
        reps.push_back(static_cast<int>(red.representatives.size()));
        CertificateBundle copy = b;
        reduced.push_back(verify_system(b, budget, &red.representatives, threads).queries_executed);
        full.push_back(verify_system(copy, budget, nullptr, threads).queries_executed);
    }
    const bool pass = reps[0] == reps[1] && reduced[0] == reduced[1] && full[0] == 30 && full[1] == 150;
    return {pass, "representatives " + std::to_string(reps[0]) + "/" + std::to_string(reps[1]) + ", queries " +
                      std::to_string(reduced[0]) + "/" + std::to_string(reduced[1]) + " reduced vs " +
                      std::to_string(full[0]) + "/" + std::to_string(full[1]) + " full (10/50 agents)"};
}

// ---------------------------------------------------------------- 6

Outcome criterion_additive_topology(int threads)
{
    CertificateBundle three = ring_bundle(3, 0.3, 0.3, 0.1, false);
    const SystemVerification base = verify_system(three, VerifyBudget{}, nullptr, threads);

    CertificateBundle four = ring_bundle(4, 0.3, 0.3, 0.1, false);
    for (int i = 0; i < 3; ++i)
        four.status[i] = three.status[i];
    const std::vector<int> trusted{0, 1, 2};
    const Reduction red = minimum_verification_network(homogeneous(SystemGraph::chain(4)), {}, trusted);
    CertificateBundle fresh = four;
    const SystemVerification add = verify_system(four, VerifyBudget{}, &red.representatives, threads, &trusted);
    const SystemVerification all = verify_system(fresh, VerifyBudget{}, nullptr, threads);
    const bool pass = base.verified && add.verified && all.verified && add.queries_executed == 3 &&
                      all.queries_executed == 12;
    return {pass, std::to_string(add.queries_executed) + " queries after appending vs " +
                      std::to_string(all.queries_executed) + " for full re-verification"};
}

// ---------------------------------------------------------------- 7

Outcome criterion_parameter_polytope(int threads)
{
    const json cfg = load_config("affine_scalar.json");
    const Scenario s = parse_scenario(cfg);
    const CegisResult r = synthesize(s, cfg, threads);
    const TrainingConfig tc = training_config_of(cfg);
    auto exact = [&](double chi) { return exact_linear_bundle(scenario_at(s, Vec::Constant(1, chi)), r.bundle, tc.delta_slack); };

    const CertifiedPolytope poly = certify_polytope({Vec::Constant(1, 0.3), Vec::Constant(1, 0.7)}, [&](const Vec& chi) {
        CertificateBundle b = exact(chi[0]);
        return verify_system(b, tc.budget, nullptr, threads).verified;
    });
    if (poly.degenerate || poly.vertices.size() != 2)
        return {false, "vertex verification failed (" + std::to_string(poly.rejected.size()) + " rejected)"};

    std::mt19937_64 rng(11);
    auto worst_residual = [&](double chi) {
        const CertificateBundle b = exact(chi);
        double worst = -1e300;
        for (Condition c : {Condition::PositivityLower, Condition::PositivityUpper, Condition::Decrement}) {
            const LocalQuery q = make_query(b, 0, c);
            for (int k = 0; k < 10000; ++k)
                worst = std::max(worst, q.residual(uniform_in(q.domain, rng)));
        }
        return worst;
    };
    double interior = -1e300;
    bool inside = true;
    for (int k = 0; k < 20; ++k) {
        const double chi = 0.3 + 0.4 * (k + 0.5) / 20.0;
        inside = inside && hull_membership(poly, Vec::Constant(1, chi));
        interior = std::max(interior, worst_residual(chi));
    }
    const double exterior = worst_residual(0.95);
    const bool outside = !hull_membership(poly, Vec::Constant(1, 0.95));
    const bool pass = r.bundle.lyapunov[0].convex_mode() && inside && outside && interior <= 1e-9 && exterior > 0.0;
    return {pass, "interior max residual " + fmt(interior) + ", exterior (0.95) max residual " + fmt(exterior)};
}

// ---------------------------------------------------------------- 8

std::vector<SystemGraph> small_graphs()
{
    std::vector<SystemGraph> out;
    for (int n = 1; n <= 6; ++n)
        out.push_back(SystemGraph::chain(n));
    for (int n = 3; n <= 6; ++n)
        out.push_back(SystemGraph::ring(n));
    for (int leaves = 1; leaves <= 5; ++leaves)
        out.push_back(SystemGraph::star(leaves));
    // Every rooted labeled tree given by a parent array, in three orientations.
    for (int n = 2; n <= 6; ++n) {
        std::vector<int> parent(n, 0);
        while (true) {
            std::vector<std::vector<int>> down(n, std::vector<int>(n, 0)), up = down, both = down;
            for (int i = 1; i < n; ++i) {
                down[i][parent[i]] = 1;
                up[parent[i]][i] = 1;
                both[i][parent[i]] = both[parent[i]][i] = 1;
            }
            out.push_back(SystemGraph::from_adjacency(down));
            out.push_back(SystemGraph::from_adjacency(up));
            out.push_back(SystemGraph::from_adjacency(both));
            int i = n - 1;
            while (i >= 1 && parent[i] == i - 1)
                parent[i--] = 0;
            if (i < 1)
                break;
            ++parent[i];
        }
    }
    return out;
}

Outcome criterion_partition_soundness()
{
    const auto graphs = small_graphs();
    int bad = 0;
    for (const auto& g : graphs)
        if (!refines_orbits(homogeneous(g)))
            ++bad;
    return {bad == 0, std::to_string(graphs.size()) + " graphs, " + std::to_string(bad) + " with cross-orbit merges"};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    int threads = 0;
    app.add_option("--only", only, "Run only these criteria (1-8)");
    app.add_option("--threads", threads, "Worker threads (0 = automatic)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"verifier soundness", criterion_verifier_soundness},
        {"gradient correctness", criterion_gradients},
        {"scalar end-to-end synthesis", [&] { return criterion_scalar_cegis(threads); }},
        {"platoon string stability", [&] { return criterion_string_stability(threads); }},
        {"reduced verification scaling", [&] { return criterion_reduced_verification(threads); }},
        {"additive topology reuse", [&] { return criterion_additive_topology(threads); }},
        {"parameter polytope transfer", [&] { return criterion_parameter_polytope(threads); }},
        {"partition soundness", criterion_partition_soundness},
    };

    bool all = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end())
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[k].first << "): " << o.detail
                  << " [" << fmt(secs) << " s]" << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
