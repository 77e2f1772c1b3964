#include "fixtures.hpp"
#include "siss/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace siss;
using namespace siss::fixtures;
using nlohmann::json;

namespace {

json scalar_config(double a)
{
    json cfg = json::parse(R"({
      "kind": "linear", "T": 0.1, "roles": ["plant"], "adjacency": [[0]],
      "params": {"roles": {"plant": {"a_self": [[0.5]], "b_d": [[0.1]]}}},
      "regions": {"state_halfwidths": [1.0], "disturbance_halfwidths": [1.0]},
      "grid": {"state_steps": [0.01], "disturbance_steps": [0.01]},
      "lipschitz_true": {"plant": 1.2}
    })");
    cfg["params"]["roles"]["plant"]["a_self"][0][0] = a;
    return cfg;
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("siss_harness_" + name)).string();
}

int run_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "siss");
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

void write_bundle(const std::string& path, const CertificateBundle& b, const json& scenario)
{
    json j = b.to_json();
    j["scenario"] = scenario;
    std::ofstream(path) << j.dump();
}

}  // namespace

TEST_CASE("disturbance strings")
{
    const auto s = DisturbanceSpec::parse("sin:0.0667Hz:4");
    CHECK(s.kind == DisturbanceSpec::Kind::Sinusoid);
    CHECK(s.frequency == doctest::Approx(0.0667));
    CHECK(s.amplitude == 4.0);
    const auto p = DisturbanceSpec::parse("pulse:2:10");
    CHECK(p.kind == DisturbanceSpec::Kind::Pulse);
    CHECK(p.duration_steps == 10);
    CHECK(DisturbanceSpec::parse("zero").kind == DisturbanceSpec::Kind::Zero);
    CHECK_THROWS_AS(DisturbanceSpec::parse("sin:xHz:1"), ConfigError);
    CHECK_THROWS_AS(DisturbanceSpec::parse("pulse:-1:3"), ConfigError);
    CHECK_THROWS_AS(DisturbanceSpec::parse("square:1"), ConfigError);
    CHECK_THROWS_AS(parse_policy_source("greedy"), ConfigError);
}

TEST_CASE("sinusoid values follow the sampling period")
{
    const Scenario s = parse_scenario(scalar_config(0.5));
    const auto d = DisturbanceSpec::parse("sin:0.25Hz:3");
    CHECK(d.value(s, 0, 0)[0] == doctest::Approx(0.0));
    CHECK(d.value(s, 0, 10)[0] == doctest::Approx(3.0));  // t = 1 s is a quarter period
    const auto pulse = DisturbanceSpec::parse("pulse:2:3");
    CHECK(pulse.value(s, 0, 2)[0] == 2.0);
    CHECK(pulse.value(s, 0, 3)[0] == 0.0);
}

TEST_CASE("zero disturbance gives the geometric trajectory")
{
    const Scenario s = parse_scenario(scalar_config(0.5));
    const CertificateBundle b = scalar_bundle(0.5, 0.05, 0.1);
    SimulationOptions opt;
    opt.steps = 30;
    const TrajectoryLog log = simulate(s, &b, DisturbanceSpec{}, opt, {Vec::Constant(1, 0.8)});
    REQUIRE(log.steps() == 30);
    for (int k = 0; k <= 30; ++k)
        CHECK(log.states[k][0][0] == doctest::Approx(0.8 * std::pow(0.5, k)));
    std::ostringstream os;
    log.write_csv(os);
    const std::string text = os.str();
    CHECK(text.rfind("step,agent,dim,value,disturbance,input\n", 0) == 0);
    // header plus one row per state sample
    CHECK(std::count(text.begin(), text.end(), '\n') == 32);
}

TEST_CASE("divergent rollouts raise a numeric error")
{
    const Scenario s = parse_scenario(scalar_config(3.0));
    SimulationOptions opt;
    opt.policy = PolicySource::None;
    opt.steps = 100;
    CHECK_THROWS_AS(simulate(s, nullptr, DisturbanceSpec{}, opt, {Vec::Constant(1, 1.0)}), NumericError);
}

TEST_CASE("error gain on a chain")
{
    TrajectoryLog log;
    for (int k = 0; k < 4; ++k) {
        const double v = std::sin(0.7 * k + 0.1);
        log.states.push_back({Vec::Constant(2, v), Vec::Constant(2, 0.5 * v), Vec::Constant(2, 0.75 * v)});
    }
    CHECK(error_gain(log, SystemGraph::chain(3), 1) == doctest::Approx(1.5));
    for (auto& row : log.states)
        row[0].setZero(), row[1].setZero();
    CHECK(error_gain(log, SystemGraph::chain(3), 0) == 0.0);
    CHECK_THROWS_AS(error_gain(log, SystemGraph::ring(3), 0), StructuralError);
    CHECK_THROWS_AS(error_gain(log, SystemGraph::chain(3), 2), StructuralError);
}

TEST_CASE("composite audit accepts a valid certificate and flags a broken one")
{
    const Scenario s = parse_scenario(scalar_config(0.5));
    SimulationOptions opt;
    opt.steps = 50;
    opt.surrogate_rollout = true;
    const CertificateBundle good = scalar_bundle(0.5, 0.05, 0.1);
    const auto dist = DisturbanceSpec::parse("sin:0.5Hz:0.8");
    const AuditResult ok = composite_lyapunov_audit(simulate(s, &good, dist, opt, {Vec::Constant(1, 0.9)}), good, true);
    CHECK(ok.max_violation <= 1e-9);
    CHECK(ok.steps_checked == 50);

    // excess 0.25 V_k peaks at the last checked step
    const CertificateBundle bad = scalar_bundle(1.2, 0.05, 0.0);
    opt.steps = 5;
    const AuditResult flagged =
        composite_lyapunov_audit(simulate(s, &bad, DisturbanceSpec{}, opt, {Vec::Constant(1, 0.1)}), bad, true);
    CHECK(flagged.max_violation == doctest::Approx(0.25 * 0.1 * std::pow(1.2, 4)).epsilon(1e-9));
}

TEST_CASE("audit skips steps outside the regions")
{
    const Scenario s = parse_scenario(scalar_config(0.5));
    const CertificateBundle b = scalar_bundle(0.5, 0.05, 0.1);
    SimulationOptions opt;
    opt.steps = 3;
    opt.surrogate_rollout = true;
    const AuditResult r = composite_lyapunov_audit(simulate(s, &b, DisturbanceSpec{}, opt, {Vec::Constant(1, 3.0)}), b, true);
    CHECK(r.steps_skipped == 2);
    CHECK(r.steps_checked == 1);
}

TEST_CASE("parameter-affine family")
{
    json cfg = scalar_config(0.5);
    cfg["parameter_affine"] = json::parse(R"({"roles": {"plant": {
        "offset": {"a_self": [[-0.5]], "b_d": [[0.1]]}, "basis": [{"a_self": [[2.0]]}]}}})");
    const Scenario base = parse_scenario(cfg);
    const Scenario at = scenario_at(base, Vec::Constant(1, 0.3));
    CHECK(at.linear.at("plant").a_self(0, 0) == doctest::Approx(0.1));
    CHECK(at.linear.at("plant").b_d(0, 0) == doctest::Approx(0.1));
    CHECK_THROWS_AS(scenario_at(base, Vec::Zero(2)), StructuralError);

    const CertificateBundle b = exact_linear_bundle(scenario_at(base, Vec::Constant(1, 0.7)), scalar_bundle(0.0, 0.05), 0.05);
    Vec z(2);
    z << 0.4, -0.3;
    CHECK(b.surrogates[0].predict(z)[0] == doctest::Approx(0.9 * 0.4 - 0.03));
    CHECK(b.margins[0].epsilon == 0.0);
}

TEST_CASE("command-line exit codes")
{
    CHECK(run_cli({"no-such-command"}) == 2);
    CHECK(run_cli({"verify"}) == 2);
    CHECK(run_cli({"verify", "--bundle", temp_path("missing.json")}) == 2);

    const std::string good = temp_path("good.json"), bad = temp_path("bad.json");
    write_bundle(good, scalar_bundle(0.5, 0.05, 0.1), scalar_config(0.5));
    write_bundle(bad, scalar_bundle(1.2, 0.05, 0.1), scalar_config(1.2));
    CHECK(run_cli({"verify", "--bundle", good}) == 0);
    CHECK(run_cli({"verify", "--bundle", bad}) == 1);
    CHECK(run_cli({"audit", "--bundle", good, "--rollouts", "3", "--steps", "20"}) == 0);
    CHECK(run_cli({"simulate", "--bundle", good, "--steps", "5", "--disturbance", "pulse:1:2"}) == 0);
    CHECK(run_cli({"simulate", "--bundle", good, "--disturbance", "bogus"}) == 2);
    CHECK(run_cli({"simulate"}) == 2);
    std::remove(good.c_str());
    std::remove(bad.c_str());
}
