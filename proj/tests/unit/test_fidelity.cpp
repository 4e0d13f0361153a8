#include "doctest.h"

#include <cmath>

#include "clinnote/fidelity.hpp"
#include "clinnote/mock_agents.hpp"
#include "support.hpp"

using namespace clinnote;
using namespace clinnote::fidelity;
using vitals::Status;
using vitals::Unit;
using vitals::Variable;

namespace {

vitals::CanonicalVital ext(const std::string& hadm, Variable v, double original, Unit unit, Status st = Status::ok) {
  vitals::CanonicalVital c;
  c.hadm_id = hadm;
  c.variable = v;
  c.original_value = original;
  c.original_unit = unit;
  c.value = vitals::to_canonical(original, unit);
  c.status = st;
  return c;
}

const JudgeConfig kJudge{"compare the lists", 0.0, 512};

TruthVital truth(const std::string& hadm, Variable v, double value, Unit unit) { return {hadm, v, value, unit, ""}; }

JudgeVerdict verdict(size_t me, size_t ne, size_t mi, size_t ni, int score = 3) {
  JudgeVerdict v;
  v.score = score;
  v.matched_extracted = me;
  v.n_extracted = ne;
  v.matched_icd = mi;
  v.n_icd = ni;
  return v;
}

}  // namespace

TEST_SUITE("fidelity") {
  TEST_CASE("tolerance bounds as printed in the agreement table") {
    const auto& t = rule_for(Variable::temperature);
    CHECK(t.bound_for(Unit::fahrenheit) == 0.5);
    CHECK(t.bound_for(Unit::celsius) == 0.3);
    CHECK(rule_for(Variable::hr).bound_for(Unit::bpm) == 5.0);
    CHECK(rule_for(Variable::rr).bound_for(Unit::breaths_per_min) == 1.0);
    CHECK(rule_for(Variable::spo2).bound_for(Unit::percent) == 1.0);
    CHECK(rule_for(Variable::height).bound_for(Unit::cm) == 2.0);
    CHECK(rule_for(Variable::height).bound_for(Unit::inch) == 1.0);
    CHECK(rule_for(Variable::weight).bound_for(Unit::kg) == 2.0);
    CHECK(rule_for(Variable::weight).bound_for(Unit::lb) == 5.0);
    CHECK(rule_for(Variable::bp_sys).bound_for(Unit::mmhg) == 5.0);
    CHECK(rule_for(Variable::bp_dia).bound_for(Unit::mmhg) == 5.0);
    CHECK(tolerance_rules().size() == std::size(vitals::kAllVariables));
    for (const auto& r : tolerance_rules())
      for (const auto& [u, b] : r.native) CHECK(b > 0);
  }

  TEST_CASE("tolerance is symmetric") {
    testing::for_all(500, 21, [](testing::Gen& g) {
      const auto& r = g.pick(tolerance_rules());
      const auto unit = r.native[static_cast<size_t>(g.integer(0, static_cast<int>(r.native.size()) - 1))].first;
      const double a = g.uniform(30, 200);
      const double b = a + g.uniform(-8, 8);
      CHECK(r.within(a, b, unit) == r.within(b, a, unit));
    });
  }

  TEST_CASE("worked examples") {
    std::vector<std::string> w;
    auto row = evaluate_vital(Variable::temperature, {ext("A", Variable::temperature, 98.2, Unit::fahrenheit)},
                              {truth("A", Variable::temperature, 98.6, Unit::fahrenheit)}, w);
    REQUIRE(row);
    CHECK(row->n_hits == 1);
    row = evaluate_vital(Variable::hr, {ext("A", Variable::hr, 100, Unit::bpm)}, {truth("A", Variable::hr, 90, Unit::bpm)}, w);
    CHECK(row->n_hits == 0);
    CHECK(*row->mae == 10.0);
    CHECK(*row->mape == doctest::Approx(100.0 / 9.0));
    CHECK_FALSE(evaluate_vital(Variable::spo2, {}, {}, w));
    REQUIRE(w.size() == 1);
    CHECK(w[0].find("spo2") != std::string::npos);
  }

  TEST_CASE("ten-admission fixture matches hand-computed values") {
    const auto bpm = Unit::bpm;
    std::vector<TruthVital> t = {
        truth("A1", Variable::hr, 90, bpm),  truth("A2", Variable::hr, 80, bpm),  truth("A2", Variable::hr, 100, bpm),
        truth("A3", Variable::hr, 60, bpm),  truth("A4", Variable::hr, 70, bpm),  truth("A5", Variable::hr, 100, bpm),
        truth("A5", Variable::hr, 110, bpm), truth("A5", Variable::hr, 120, bpm), truth("A6", Variable::hr, 50, bpm),
        truth("A7", Variable::hr, 120, bpm), truth("A8", Variable::hr, 75, bpm),  truth("A9", Variable::hr, 88, bpm),
        truth("A10", Variable::hr, 95, bpm), truth("A1", Variable::rr, 18, Unit::breaths_per_min),
    };
    std::vector<vitals::CanonicalVital> e = {
        ext("A1", Variable::hr, 92, bpm),   // hit, 2
        ext("A2", Variable::hr, 100, bpm),  // truth median 90: miss, 10
        ext("A3", Variable::hr, 65, bpm),   // exactly on the bound: hit, 5
        ext("A4", Variable::hr, 76, bpm),   // miss, 6
        ext("A5", Variable::hr, 110, bpm),  // hit, 0
        ext("A6", Variable::hr, 48, bpm),   ext("A6", Variable::hr, 52, bpm),  // median 50: hit, 0
        ext("A7", Variable::hr, 130, bpm),  // miss, 10
        ext("A8", Variable::hr, 400, bpm, Status::out_of_range),  // not usable
        ext("A11", Variable::hr, 70, bpm),  // no truth: ignored
        ext("A1", Variable::rr, 30, Unit::breaths_per_min),
    };
    std::vector<std::string> w;
    const auto row = evaluate_vital(Variable::hr, e, t, w);
    REQUIRE(row);
    CHECK(row->n_truth == 10);
    CHECK(row->n_extracted == 7);
    CHECK(row->n_hits == 4);
    CHECK(std::abs(row->pct_extracted - 70.0) < 1e-9);
    CHECK(std::abs(row->cond_acc - 400.0 / 7.0) < 1e-9);
    CHECK(std::abs(*row->mae - 33.0 / 7.0) < 1e-9);
    const double mape = 100.0 * (2.0 / 90 + 10.0 / 90 + 5.0 / 60 + 6.0 / 70 + 0 + 0 + 10.0 / 120) / 7.0;
    CHECK(std::abs(*row->mape - mape) < 1e-9);
    CHECK(row->tolerance == "+/-5 bpm");
    CHECK(w.empty());
  }

  TEST_CASE("mixed units fall back to canonical comparison") {
    std::vector<std::string> w;
    // 100.4 F = 38.0 C; 37.8 C is 0.2 C away
    auto row = evaluate_vital(Variable::temperature, {ext("A", Variable::temperature, 37.8, Unit::celsius)},
                              {truth("A", Variable::temperature, 100.4, Unit::fahrenheit)}, w);
    CHECK(row->n_hits == 1);
    CHECK(std::abs(*row->mae - 0.2) < 1e-9);
    // 98.6 F = 37.0 C; 37.4 C misses the 0.3 C bound
    row = evaluate_vital(Variable::temperature, {ext("A", Variable::temperature, 37.4, Unit::celsius)},
                         {truth("A", Variable::temperature, 98.6, Unit::fahrenheit)}, w);
    CHECK(row->n_hits == 0);
    // the same pair in native pounds uses the 5 lb bound
    row = evaluate_vital(Variable::weight, {ext("A", Variable::weight, 184, Unit::lb)},
                         {truth("A", Variable::weight, 180, Unit::lb)}, w);
    CHECK(row->n_hits == 1);
  }

  TEST_CASE("MAPE agrees across the Fahrenheit and Celsius paths") {
    testing::for_all(200, 22, [](testing::Gen& g) {
      const double tf = g.uniform(95, 104), ef = tf + g.uniform(-3, 3);
      std::vector<std::string> w;
      const auto f = evaluate_vital(Variable::temperature, {ext("A", Variable::temperature, ef, Unit::fahrenheit)},
                                    {truth("A", Variable::temperature, tf, Unit::fahrenheit)}, w);
      const auto c = evaluate_vital(
          Variable::temperature, {ext("A", Variable::temperature, vitals::fahrenheit_to_celsius(ef), Unit::celsius)},
          {truth("A", Variable::temperature, vitals::fahrenheit_to_celsius(tf), Unit::celsius)}, w);
      CHECK(std::abs(*f->mape - *c->mape) < 1e-6);
      CHECK(std::abs(*f->mae - *c->mae) < 1e-6);
      CHECK((*f->mae == 0.0) == (tf == ef));
    });
  }

  TEST_CASE("removing unusable extractions leaves conditional accuracy unchanged") {
    testing::for_all(100, 23, [](testing::Gen& g) {
      std::vector<TruthVital> t;
      std::vector<vitals::CanonicalVital> e, usable;
      for (int i = 0; i < g.integer(1, 15); ++i) {
        const std::string h = "H" + std::to_string(i);
        const double v = g.uniform(50, 120);
        t.push_back(truth(h, Variable::hr, v, Unit::bpm));
        if (g.coin()) {
          e.push_back(ext(h, Variable::hr, v + g.uniform(-10, 10), Unit::bpm));
          usable.push_back(e.back());
        }
        if (g.coin()) e.push_back(ext(h, Variable::hr, 999, Unit::bpm, Status::out_of_range));
      }
      std::vector<std::string> w;
      const auto a = evaluate_vital(Variable::hr, e, t, w);
      const auto b = evaluate_vital(Variable::hr, usable, t, w);
      CHECK(a->cond_acc == b->cond_acc);
      CHECK(a->n_extracted == b->n_extracted);
      CHECK(a->cond_acc >= 0.0);
      CHECK(a->cond_acc <= 100.0);
      CHECK(a->pct_extracted <= 100.0);
    });
  }

  TEST_CASE("categorical canonicalization") {
    CHECK(categorical_match("gender", "M", "MALE"));
    CHECK_FALSE(categorical_match("gender", "F", "M"));
    CHECK(categorical_match("age", "72", "72.9"));
    CHECK(categorical_match("age", "72 yo", "73"));
    CHECK_FALSE(categorical_match("age", "70s", "72"));
    CHECK(categorical_match("marital_status", "widow", "WIDOWED"));
    CHECK(categorical_match("language", "English", "ENGL"));
    CHECK_FALSE(parse_age("50s"));
    CHECK(parse_age(" 84 ") == 84.0);

    std::map<HadmId, std::optional<std::string>> e = {{"A", "M"}, {"B", std::nullopt}, {"C", "female"}, {"D", "M"}};
    std::map<HadmId, std::string> t = {{"A", "MALE"}, {"B", "F"}, {"C", "M"}, {"E", "F"}};
    const auto row = evaluate_categorical("gender", e, t);
    CHECK(row.n_truth == 4);
    CHECK(row.n_extracted == 2);
    CHECK(row.n_hits == 1);
    CHECK(row.pct_extracted == 50.0);
    CHECK(row.cond_acc == 50.0);
    CHECK_FALSE(row.mae);
  }

  TEST_CASE("truth loaders") {
    const auto v = load_truth_vitals(
        "hadm_id,variable,value,unit,charttime\nA,hr,80,bpm,\nA,glucose,100,mg/dl,\nB,temperature,x,C,\n"
        "B,body_temperature,98.6,F,2130-01-01\n");
    CHECK(v.rows.size() == 2);
    CHECK(v.rejects.size() == 2);
    CHECK(v.rows[1].unit == Unit::fahrenheit);
    const auto s = load_truth_sdoh("hadm_id,variable,value\nA,Gender,M\nB,Gender, \nA,Language,ENGL\n");
    CHECK(s.at("gender").size() == 1);
    CHECK(s.at("language").at("A") == "ENGL");
  }

  TEST_CASE("agreement report warns for missing truth") {
    extract::ExtractionRecord r;
    r.hadm_id = "A";
    r.get(extract::Field::gender) = "M";
    const auto rep = evaluate_agreement({r}, {ext("A", Variable::hr, 80, Unit::bpm)}, {truth("A", Variable::hr, 82, Unit::bpm)},
                                        {{"gender", {{"A", "MALE"}}}});
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].variable == "hr");
    CHECK(rep.rows[1].cond_acc == 100.0);
    CHECK(rep.warnings.size() == 7 + 3);
    CHECK(to_json(rep)["rows"].size() == 2);
  }

  TEST_CASE("ICD descriptions") {
    const auto d = IcdDescriptions::parse("icd9_code,long_title\n428.0,\"Congestive heart failure, unspecified\"\n");
    CHECK(d.describe("4280") == "Congestive heart failure, unspecified");
    CHECK(d.describe("428.0") == "Congestive heart failure, unspecified");
    CHECK(d.describe("9999") == "9999");
    CHECK(IcdDescriptions::load(std::string(CLINNOTE_DATA_DIR) + "/icd9_descriptions.csv").size() > 40);
  }

  TEST_CASE("judge reply parsing") {
    const JudgeItem item{"H", {"a", "b", "c"}, {"x", "y"}};
    auto v = parse_judge_reply(item, R"(ok {"score": 4, "matches": [{"extracted_index": 0, "icd_index": 1}, [2, 0]]})");
    CHECK(v.score == 4);
    CHECK(v.matched_extracted == 2);
    CHECK(v.matched_icd == 2);
    CHECK(*v.cond_acc() == doctest::Approx(2.0 / 3.0));
    CHECK(*v.abs_acc() == 1.0);
    CHECK_THROWS_AS(parse_judge_reply(item, "no"), JudgeReplyInvalid);
    CHECK_THROWS_AS(parse_judge_reply(item, R"({"score": 6})"), JudgeReplyInvalid);
    CHECK_THROWS_AS(parse_judge_reply(item, R"({"score": 2.5})"), JudgeReplyInvalid);
    CHECK_THROWS_AS(parse_judge_reply(item, R"({"score": 2, "matches": [[0, 2]]})"), JudgeReplyInvalid);
    // two extracted items onto one ICD item
    CHECK_THROWS_AS(parse_judge_reply(item, R"({"score": 2, "matches": [[0, 1], [1, 1]]})"), JudgeReplyInvalid);
    CHECK_THROWS_AS(parse_judge_reply(item, R"({"score": 2, "matches": [[0, 0], [0, 1]]})"), JudgeReplyInvalid);
  }

  TEST_CASE("identity fixture scores 5 with full accuracy") {
    const auto icd = IcdDescriptions::load(std::string(CLINNOTE_DATA_DIR) + "/icd9_descriptions.csv");
    const std::vector<std::string> dx = {icd.describe("4280"), icd.describe("5849"), icd.describe("4019"),
                                         icd.describe("25000"), icd.describe("42731")};
    auto m = std::make_shared<llm::MockBackend>();
    mock::install_responders(*m);
    llm::Gateway gw({}, m);
    const auto v = judge_diagnoses(gw, kJudge, {"H1", dx, dx});
    CHECK(v.score == 5);
    CHECK(*v.cond_acc() == 1.0);
    CHECK(*v.abs_acc() == 1.0);
    const auto s = corpus_judge_summary({v});
    CHECK(s.cond_acc == 1.0);
    CHECK(s.abs_acc == 1.0);
  }

  TEST_CASE("empty lists are scored without a call") {
    auto m = std::make_shared<llm::MockBackend>();
    llm::Gateway gw({}, m);
    std::vector<std::string> icd(10, "x");
    const auto out = judge_all(gw, kJudge, {{"H", {}, icd}});
    const auto& v = std::get<JudgeVerdict>(out[0]);
    CHECK(v.score == 0);
    CHECK_FALSE(v.cond_acc());
    CHECK(*v.abs_acc() == 0.0);
    CHECK(gw.stats().backend_calls == 0);
  }

  TEST_CASE("one repair, then failure") {
    auto m = std::make_shared<llm::MockBackend>();
    m->add_transcript_entry({"judge", "", "Previous reply:\nnope", R"({"score": 1, "matches": []})"});
    m->add_transcript_entry({"judge", "", "0. first", "nope"});
    m->add_transcript_entry({"judge", "", "0. broken", "still nope"});
    llm::Gateway gw({}, m);
    const auto out = judge_all(gw, kJudge, {{"H1", {"first"}, {"icd"}}, {"H2", {"broken"}, {"icd"}}});
    CHECK(std::get<JudgeVerdict>(out[0]).score == 1);
    const auto& f = std::get<JudgeFailure>(out[1]);
    CHECK(f.hadm_id == "H2");
    CHECK(f.raw_responses.size() == 2);
    CHECK_THROWS_AS(judge_diagnoses(gw, kJudge, {"H2", {"broken"}, {"icd"}}), JudgeFailed);
  }

  TEST_CASE("micro and macro averages") {
    const std::vector<JudgeVerdict> vs = {verdict(2, 4, 2, 10, 2), verdict(3, 3, 3, 5, 4)};
    const auto micro = corpus_judge_summary(vs);
    CHECK(std::abs(micro.cond_acc - 5.0 / 7.0) < 1e-12);
    CHECK(std::abs(micro.abs_acc - 5.0 / 15.0) < 1e-12);
    CHECK(micro.mean_score == 3.0);
    CHECK(micro.avg_n_extracted == 3.5);
    CHECK(micro.avg_n_icd == 7.5);
    const auto macro = corpus_judge_summary(vs, true);
    CHECK(std::abs(macro.cond_acc - 0.75) < 1e-12);
    CHECK(std::abs(macro.abs_acc - 0.4) < 1e-12);
    const auto threes = corpus_judge_summary({verdict(1, 1, 1, 1), verdict(1, 1, 1, 1), verdict(1, 1, 1, 1)});
    CHECK(threes.mean_score == 3.0);
    CHECK(threes.median_score == 3.0);
    // no extractions: excluded from the conditional denominator only
    const auto with_empty = corpus_judge_summary({verdict(2, 4, 2, 10), verdict(0, 0, 0, 10, 0)});
    CHECK(with_empty.cond_acc == 0.5);
    CHECK(with_empty.abs_acc == 0.1);
    CHECK_THROWS_AS(corpus_judge_summary({}), InvalidInput);
  }
}
