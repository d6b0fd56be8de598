// Copyright 2026 The slicealign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <array>
#include <cmath>

#include "doctest.h"
#include "slicealign/error.hpp"
#include "slicealign/prompt_engine.hpp"

using namespace slicealign;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

PromptBank effusion_bank() {
  const std::vector<std::string> pos = {"{a} is present.", "There is {a}.", "Evidence of {a}."};
  const std::vector<std::string> neg = {"No {a} is identified.", "There is no {a}.",
                                        "No evidence of {a}."};
  PromptBank bank;
  bank.add(make_prompt_entry("pleural effusion", pos, neg));
  return bank;
}

}  // namespace

TEST_CASE("render_prompt examples") {
  CHECK(render_prompt("pleural effusion", "{a} is present.") == "Pleural effusion is present.");
  CHECK(render_prompt("pleural effusion", "No {a} is identified.") ==
        "No pleural effusion is identified.");
  CHECK(code_of([] { render_prompt("x", "nothing here"); }) == ErrorCode::kMissingPlaceholder);
  CHECK(code_of([] { render_prompt("x", "{a} and {a}"); }) == ErrorCode::kMissingPlaceholder);
  const std::vector<std::string> templates = {"{a} is present.", "No {a}."};
  const auto rendered = render_prompts("emphysema", templates);
  REQUIRE(rendered.size() == 2);
  CHECK(rendered[1] == "No emphysema.");
}

TEST_CASE("PromptBank validation") {
  PromptBank bank = effusion_bank();
  CHECK(bank.size() == 1);
  CHECK(bank.contains("pleural effusion"));
  CHECK(bank.at("pleural effusion").negatives[0] == "No pleural effusion is identified.");
  CHECK(code_of([&] { bank.at("atelectasis"); }) == ErrorCode::kUnknownFinding);

  PromptEntry dup_variant{"x", {"A.", "A.", "B."}, {"C.", "D.", "E."}};
  CHECK(code_of([&] { bank.add(dup_variant); }) == ErrorCode::kInvalidPromptBank);
  PromptEntry empty_variant{"y", {"A.", "", "B."}, {"C.", "D.", "E."}};
  CHECK(code_of([&] { bank.add(empty_variant); }) == ErrorCode::kInvalidPromptBank);
  CHECK(code_of([&] { bank.add(bank.at("pleural effusion")); }) == ErrorCode::kInvalidPromptBank);
  CHECK(bank.size() == 1);
}

TEST_CASE("sample_variant") {
  const PromptBank bank = effusion_bank();
  const auto& entry = bank.at("pleural effusion");

  Rng a(77), b(77);
  for (int i = 0; i < 20; ++i) {
    CHECK(sample_variant(bank, "pleural effusion", Polarity::kPositive, a) ==
          sample_variant(bank, "pleural effusion", Polarity::kPositive, b));
  }

  Rng rng(5);
  std::array<int, 3> counts{};
  const int n = 30000;
  for (int i = 0; i < n; ++i) {
    const std::string& s = sample_variant(bank, "pleural effusion", Polarity::kNegative, rng);
    bool found = false;
    for (std::size_t k = 0; k < 3; ++k) {
      if (s == entry.negatives[k]) {
        ++counts[k];
        found = true;
      }
    }
    CHECK(found);
  }
  for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.01);

  CHECK(code_of([&] { sample_variant(bank, "atelectasis", Polarity::kPositive, rng); }) ==
        ErrorCode::kUnknownFinding);
}

TEST_CASE("averaged_prompt_embedding") {
  const Vector v = l2_normalize(vec2(0.6, -0.8));
  const std::array<Vector, 3> same{v, v, v};
  CHECK((averaged_prompt_embedding(same) - v).cwiseAbs().maxCoeff() < 1e-15);

  const std::array<Vector, 3> mixed{vec2(1, 0), vec2(0, 1), vec2(1, 0)};
  const Vector m = averaged_prompt_embedding(mixed);
  CHECK(m[0] == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-14));
  CHECK(m[1] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-14));
  CHECK(m[0] == doctest::Approx(0.8944).epsilon(1e-4));

  const std::array<Vector, 3> shuffled{vec2(0, 1), vec2(1, 0), vec2(1, 0)};
  CHECK((averaged_prompt_embedding(shuffled) - m).cwiseAbs().maxCoeff() < 1e-15);

  const double h = std::sqrt(3.0) / 2.0;
  const std::array<Vector, 3> cancel{vec2(1, 0), vec2(-0.5, h), vec2(-0.5, -h)};
  CHECK(code_of([&] { averaged_prompt_embedding(cancel); }) == ErrorCode::kZeroVector);
}

TEST_CASE("classify_finding examples") {
  const Vector z = vec2(1, 0);
  const Vector p = l2_normalize(vec2(1, 1));
  CHECK(classify_finding(z, p, p, 0.1) == 0.5);

  const double tau = 0.2;
  CHECK(classify_from_similarities(0.1 + tau * std::log(9.0), 0.1, tau) ==
        doctest::Approx(0.9).epsilon(1e-12));

  const double sat = classify_finding(z, z, vec2(0, 1), 0.1);
  CHECK(sat == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-14));
  CHECK(sat == doctest::Approx(0.99995).epsilon(1e-5));

  CHECK(code_of([&] { classify_finding(z, z, z, 0.0); }) == ErrorCode::kNonPositiveTau);
}

TEST_CASE("classify_finding complements and shift invariance") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Vector z(4), a(4), b(4);
    for (int i = 0; i < 4; ++i) {
      z[i] = standard_normal(rng);
      a[i] = standard_normal(rng);
      b[i] = standard_normal(rng);
    }
    z = l2_normalize(z);
    a = l2_normalize(a);
    b = l2_normalize(b);
    const double tau = 0.01 + uniform01(rng);
    CHECK(std::abs(classify_finding(z, a, b, tau) + classify_finding(z, b, a, tau) - 1.0) < 1e-12);
    const double sa = z.dot(a), sb = z.dot(b), c = uniform01(rng) - 0.5;
    CHECK(std::abs(classify_from_similarities(sa + c, sb + c, tau) -
                   classify_from_similarities(sa, sb, tau)) < 1e-12);
  }
}

TEST_CASE("template averaging") {
  CHECK(default_inference_templates().size() == 7);
  CHECK(render_prompt("pleural effusion", default_inference_templates()[0].positive) ==
        "Pleural effusion is present.");

  const Vector z = vec2(1, 0);
  const std::vector<std::pair<Vector, Vector>> per = {{vec2(1, 0), vec2(0, 1)},
                                                      {vec2(0, 1), vec2(1, 0)}};
  CHECK(template_averaged_probability(z, per, 0.1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("map_labels examples") {
  ClassMapping mapping;
  mapping.classes = {{"Lung nodule", {"nodule", "mass", "opacity"}}};
  FindingLabelRecord rec;
  rec.volume_id = "v";
  rec.labels = {{"nodule", Label::kNegative}, {"mass", Label::kNegative},
                {"opacity", Label::kNegative}};
  CHECK(map_labels(rec, mapping)[0].second == Label::kNegative);

  rec.labels["mass"] = Label::kPositive;
  CHECK(map_labels(rec, mapping)[0].second == Label::kPositive);

  rec.labels.clear();
  CHECK(map_labels(rec, mapping)[0].second == Label::kAbsent);

  // One known negative among absent sources is a negative.
  rec.labels = {{"opacity", Label::kNegative}};
  CHECK(map_labels(rec, mapping)[0].second == Label::kNegative);

  ClassMapping bad;
  bad.classes = {{"Empty", {}}};
  CHECK(code_of([&] { map_labels(rec, bad); }) == ErrorCode::kUnmappedClass);
}

TEST_CASE("map_labels is monotone in positive sources") {
  ClassMapping mapping;
  mapping.classes = {{"A", {"f0", "f1", "f2"}}, {"B", {"f2", "f3"}}};
  const std::array<Label, 3> states{Label::kNegative, Label::kPositive, Label::kAbsent};
  for (int code = 0; code < 81; ++code) {
    FindingLabelRecord rec;
    int c = code;
    for (int f = 0; f < 4; ++f) {
      const Label l = states[c % 3];
      c /= 3;
      if (l != Label::kAbsent) rec.labels["f" + std::to_string(f)] = l;
    }
    const auto before = map_labels(rec, mapping);
    for (int f = 0; f < 4; ++f) {
      FindingLabelRecord more = rec;
      more.labels["f" + std::to_string(f)] = Label::kPositive;
      const auto after = map_labels(more, mapping);
      for (std::size_t k = 0; k < before.size(); ++k) {
        if (before[k].second == Label::kPositive) CHECK(after[k].second == Label::kPositive);
      }
    }
  }
}

TEST_CASE("finding weights and classes") {
  CHECK(ctrate_classes().size() == 18);
  const std::vector<std::string> vocab = {"a", "b", "c"};
  const std::vector<std::string> mapped = {"b"};
  const auto w = default_finding_weights(vocab, mapped, 2.5);
  CHECK(w.at("a") == 1.0);
  CHECK(w.at("b") == 2.5);
  FindingCounts fc;
  fc.n_neg = 0;
  CHECK_FALSE(fc.alpha_defined());
}
