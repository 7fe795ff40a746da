#include <doctest.h>

#include <map>

#include "guidemod/orchestrator.hpp"
#include "guidemod/util.hpp"
#include "support/helpers.hpp"

using namespace guidemod;
using orchestrator::StopReason;
using testsupport::TempDir;

namespace {

// relative path -> file bytes, for whole-archive comparisons
std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        files[std::filesystem::relative(entry.path(), root).string()] =
            util::read_file(entry.path());
    }
    return files;
}

orchestrator::LoopConfig nogain_config(const std::filesystem::path& archive,
                                       const std::filesystem::path& store,
                                       gateway::GatewayMode mode) {
    auto config = orchestrator::LoopConfig::load(testsupport::fixture_dir() / "loop_nogain" /
                                                 "config.json");
    config.archive = archive;
    config.fixture_store = store;
    config.mode = mode;
    return config;
}

}  // namespace

TEST_CASE("decide_termination applies threshold, no-gain and the guard in order") {
    CHECK_THROWS_AS(orchestrator::decide_termination({}, 0.9, 10), std::invalid_argument);

    const auto threshold = orchestrator::decide_termination({0.92}, 0.9, 10);
    CHECK(threshold.stop);
    CHECK(threshold.reason == StopReason::threshold);
    CHECK(threshold.accepted_iteration == 0);

    const auto no_gain = orchestrator::decide_termination({0.60, 0.55}, 0.9, 10);
    CHECK(no_gain.stop);
    CHECK(no_gain.reason == StopReason::no_gain);
    CHECK(no_gain.accepted_iteration == 0);  // the G_1 refinement is discarded

    const auto equal_is_no_gain = orchestrator::decide_termination({0.60, 0.60}, 0.9, 10);
    CHECK(equal_is_no_gain.reason == StopReason::no_gain);

    const auto rising = orchestrator::decide_termination({0.46, 0.73, 0.76}, 0.9, 10);
    CHECK_FALSE(rising.stop);

    // threshold outranks no-gain when both fire
    const auto both = orchestrator::decide_termination({0.95, 0.92}, 0.9, 10);
    CHECK(both.reason == StopReason::threshold);
    CHECK(both.accepted_iteration == 1);

    const auto guard = orchestrator::decide_termination({0.40, 0.50, 0.60}, 0.9, 3);
    CHECK(guard.stop);
    CHECK(guard.reason == StopReason::max_iterations);
    CHECK(guard.accepted_iteration == 2);
}

TEST_CASE("price table parses and attaches to the model spec") {
    TempDir dir("prices");
    util::write_file(dir.path() / "prices.csv",
                     "model_id,price_in,price_out,currency\nm-1,1.25,10.0,USD\nm-2,0.5,2,EUR\n");
    const auto table = orchestrator::load_price_table(dir.path() / "prices.csv");
    REQUIRE(table.size() == 2);
    CHECK(table.at("m-1").price_in == 1.25);
    CHECK(table.at("m-1").price_out == 10.0);
    CHECK(table.at("m-2").currency == "EUR");
}

TEST_CASE("loop config resolves relative paths against the config directory") {
    const auto config = orchestrator::LoopConfig::load(testsupport::fixture_dir() /
                                                       "loop_nogain" / "config.json");
    CHECK(std::filesystem::exists(config.guideline));
    CHECK(std::filesystem::exists(config.schema));
    CHECK(std::filesystem::exists(config.annotation_template));
    CHECK(std::filesystem::exists(config.script));
    CHECK(config.model.model_id == "scripted-annotator-1");
    CHECK(config.model.price_in == 1.0);   // from the fixture price table
    CHECK(config.model.price_out == 2.0);
    CHECK(config.tau == 0.9);
    CHECK(config.parallelism == 2);
}

TEST_CASE("no-gain session: rollback, archive shape, byte-identical replays, resume") {
    TempDir work("loop-nogain");
    const auto store = work.path() / "store";

    // record once through the scripted provider, then replay twice
    const auto recorded = orchestrator::run_loop(
        nogain_config(work.path() / "archive-rec", store, gateway::GatewayMode::record));
    CHECK(recorded.status == "completed");
    CHECK(recorded.stop_reason == StopReason::no_gain);
    CHECK(recorded.accepted_iteration == 2);
    CHECK(recorded.refinements_accepted == 2);
    REQUIRE(recorded.iterations.size() == 4);
    CHECK(recorded.iterations[0].iaa == doctest::Approx(0.46).epsilon(1e-12));
    CHECK(recorded.iterations[1].iaa == doctest::Approx(0.73).epsilon(1e-12));
    CHECK(recorded.iterations[2].iaa == doctest::Approx(0.76).epsilon(1e-12));
    CHECK(recorded.iterations[3].iaa == doctest::Approx(0.74).epsilon(1e-12));
    CHECK(recorded.iterations[2].moderated);
    CHECK_FALSE(recorded.iterations[3].moderated);

    const auto replay_a = orchestrator::run_loop(
        nogain_config(work.path() / "archive-a", store, gateway::GatewayMode::replay));
    const auto replay_b = orchestrator::run_loop(
        nogain_config(work.path() / "archive-b", store, gateway::GatewayMode::replay));
    CHECK(replay_a.stop_reason == StopReason::no_gain);
    CHECK(snapshot(work.path() / "archive-a") == snapshot(work.path() / "archive-b"));
    CHECK(snapshot(work.path() / "archive-rec") == snapshot(work.path() / "archive-a"));

    // the accepted guideline is the one that produced 0.76 (two refinements)
    const auto final_text = util::read_file(work.path() / "archive-a" / "final-guideline.md");
    CHECK(final_text.find("Rule Alpha.") != std::string::npos);
    CHECK(final_text.find("Rule Beta.") != std::string::npos);
    CHECK(final_text.find("Rule Gamma.") == std::string::npos);

    // archive completeness: every iteration cross-references by k
    for (int k = 0; k < 4; ++k) {
        char name[16];
        std::snprintf(name, sizeof(name), "iter-%03d", k);
        const auto dir = work.path() / "archive-a" / name;
        CHECK(std::filesystem::exists(dir / "guideline.md"));
        CHECK(std::filesystem::exists(dir / "evaluation.json"));
        CHECK(std::filesystem::exists(dir / "predictions"));
        const auto ej = nlohmann::json::parse(util::read_file(dir / "evaluation.json"));
        CHECK(ej.at("iteration") == k);
        if (k < 3) {
            CHECK(std::filesystem::exists(dir / "moderation" / "record.json"));
            const auto rj =
                nlohmann::json::parse(util::read_file(dir / "moderation" / "record.json"));
            CHECK(rj.at("iteration") == k);
            CHECK(rj.at("guideline_after_version") == k + 1);
        }
    }

    // rerunning over the finished archive touches no provider and no file:
    // an empty store would make any gateway call throw
    const auto untouched_before = snapshot(work.path() / "archive-a");
    const auto rerun = orchestrator::run_loop(nogain_config(
        work.path() / "archive-a", work.path() / "empty-store", gateway::GatewayMode::replay));
    CHECK(rerun.stop_reason == StopReason::no_gain);
    CHECK(rerun.accepted_iteration == 2);
    CHECK(snapshot(work.path() / "archive-a") == untouched_before);

    // resume: drop the final iteration and run.json, the loop rebuilds only
    // what is missing and converges to the same bytes
    const auto resumable = work.path() / "archive-resume";
    std::filesystem::copy(work.path() / "archive-a", resumable,
                          std::filesystem::copy_options::recursive);
    std::filesystem::remove(resumable / "run.json");
    std::filesystem::remove(resumable / "final-guideline.md");
    std::filesystem::remove_all(resumable / "iter-003");
    const auto resumed =
        orchestrator::run_loop(nogain_config(resumable, store, gateway::GatewayMode::replay));
    CHECK(resumed.stop_reason == StopReason::no_gain);
    CHECK(snapshot(resumable) == snapshot(work.path() / "archive-a"));
}

TEST_CASE("immediate-threshold session stops with zero moderation rounds") {
    TempDir work("loop-now");
    auto config = orchestrator::LoopConfig::load(testsupport::fixture_dir() / "loop_immediate" /
                                                 "config.json");
    config.archive = work.path() / "archive";
    config.fixture_store = work.path() / "store";
    config.mode = gateway::GatewayMode::record;

    const auto summary = orchestrator::run_loop(config);
    CHECK(summary.status == "completed");
    CHECK(summary.stop_reason == StopReason::threshold);
    CHECK(summary.accepted_iteration == 0);
    CHECK(summary.refinements_accepted == 0);
    REQUIRE(summary.iterations.size() == 1);
    CHECK(summary.iterations[0].iaa == doctest::Approx(1.0));
    CHECK_FALSE(summary.iterations[0].moderated);
    CHECK_FALSE(std::filesystem::exists(work.path() / "archive" / "iter-001"));
    CHECK_FALSE(std::filesystem::exists(work.path() / "archive" / "iter-000" / "moderation"));
}

TEST_CASE("paired counts load from two archives and align by document") {
    TempDir work("loop-paired");
    const auto store = work.path() / "store";
    orchestrator::run_loop(
        nogain_config(work.path() / "archive-g", store, gateway::GatewayMode::record));
    orchestrator::run_loop(
        nogain_config(work.path() / "archive-m", store, gateway::GatewayMode::replay));

    const auto paired = orchestrator::paired_counts_from_archives(work.path() / "archive-g",
                                                                  work.path() / "archive-m");
    REQUIRE(paired.size() == 10);
    for (const auto& doc : paired) {
        CHECK(doc.g.tp == doc.m.tp);  // identical runs
        CHECK(doc.g.tp + doc.g.fn == 10);
    }
    // accepted iteration is 2: per-doc counts must come from iter-002
    long tp = 0;
    for (const auto& doc : paired) tp += doc.g.tp;
    CHECK(tp == 76);
}
