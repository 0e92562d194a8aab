/*
   Copyright 2026 The qpulse Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "qpulse/ensemble.hpp"

#include "oracle.hpp"

#include <gtest/gtest.h>

using namespace qpulse;

namespace {

Hypothesis hyp(std::string label, AtomLevel atom, double prior = 0.5) {
  Hypothesis h;
  h.label = std::move(label);
  h.atom_init = atom;
  h.prior = prior;
  return h;
}

ModelConfig counting_base(int n, double dt = 1e-2) {
  ModelConfig c;
  c.field = FockField{n};
  c.dt = dt;
  return c;
}

MeasurementRecord record_for(const ModelConfig& c, AtomLevel atom, std::uint64_t seed) {
  ModelConfig t = c;
  t.atom_init = atom;
  const Model m(t);
  TrajectoryOptions opt;
  opt.warnings = nullptr;
  if (c.detection.scheme == DetectionScheme::kCounting) return simulate_counting_trajectory(m, seed, opt).record;
  return simulate_homodyne_trajectory(m, seed, opt).record;
}

}  // namespace

TEST(Posterior, ErrorProbabilityExamples) {
  EXPECT_EQ(error_probability({0.5, 0.5}), 0.5);
  EXPECT_EQ(error_probability({1.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(error_probability({0.2, 0.3, 0.5}), 0.5);
  EXPECT_THROW(error_probability({}), ConfigError);
}

TEST(Posterior, FromLogWeights) {
  const auto p = posteriors_from_log({std::log(0.25), std::log(0.75)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  // -1e6 + log 3 is only representable to ~1e-10.
  const auto huge = posteriors_from_log({-1e6, -1e6 + std::log(3.0)});
  EXPECT_NEAR(huge[1], 0.75, 1e-10);
  const auto shifted = posteriors_from_log({-1e6, -1e6 + 1.0});
  EXPECT_NEAR(shifted[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  const auto one = posteriors_from_log({-std::numeric_limits<double>::infinity(), -5.0});
  EXPECT_EQ(one[0], 0.0);
  EXPECT_EQ(one[1], 1.0);
  EXPECT_THROW(posteriors_from_log({-std::numeric_limits<double>::infinity()}), AllFiltersDead);
}

TEST(Hypotheses, Validation) {
  EXPECT_THROW(validate_hypotheses({}), ConfigError);
  EXPECT_THROW(validate_hypotheses({hyp("a", AtomLevel::kGround0, 0.5), hyp("a", AtomLevel::kGround1, 0.5)}),
               ConfigError);
  EXPECT_THROW(validate_hypotheses({hyp("a", AtomLevel::kGround0, 0.5), hyp("b", AtomLevel::kGround1, 0.4)}),
               ConfigError);
  EXPECT_THROW(validate_hypotheses({hyp("a b", AtomLevel::kGround0, 1.0)}), ConfigError);
  EXPECT_THROW(validate_hypotheses({hyp("a", AtomLevel::kGround0, 0.0), hyp("b", AtomLevel::kGround1, 1.0)}),
               ConfigError);
  EXPECT_NO_THROW(validate_hypotheses({hyp("only", AtomLevel::kGround1, 1.0)}));
}

TEST(Filter, InitialPosteriors) {
  const ModelConfig base = counting_base(2);
  FilterBank even(base, {hyp("0", AtomLevel::kGround0), hyp("1", AtomLevel::kGround1)});
  EXPECT_EQ(even.posteriors(), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(error_probability(even.posteriors()), 0.5);
  FilterBank skew(base, {hyp("0", AtomLevel::kGround0, 0.9), hyp("1", AtomLevel::kGround1, 0.1)});
  const auto p = skew.posteriors();
  EXPECT_NEAR(p[0], 0.9, 1e-15);
  EXPECT_NEAR(p[1], 0.1, 1e-15);
}

TEST(Filter, SingleHypothesisPinned) {
  const ModelConfig base = counting_base(2);
  FilterBank bank(base, {hyp("1", AtomLevel::kGround1, 1.0)});
  const auto rec = record_for(base, AtomLevel::kGround1, 4);
  const auto s = filter_record(bank, rec);
  for (const auto& p : s.posteriors) EXPECT_EQ(p[0], 1.0);
  for (double q : s.error) EXPECT_EQ(q, 0.0);
}

TEST(Filter, ImpossibleClickKillsHypothesis) {
  ModelConfig base = counting_base(0);
  base.cavity_dim = 2;
  Hypothesis dark = hyp("dark", AtomLevel::kGround0);
  Hypothesis bright = hyp("bright", AtomLevel::kExcited);
  FilterBank bank(base, {dark, bright});
  filter_step_counting(bank, 0, false);
  filter_step_counting(bank, 1, true);
  EXPECT_FALSE(bank.alive(0));
  EXPECT_TRUE(bank.alive(1));
  EXPECT_EQ(posteriors(bank), (std::vector<double>{0.0, 1.0}));
  EXPECT_THROW(filter_step_counting(bank, 5, false), ConfigError);

  FilterBank all_dark(base, {dark, hyp("dark2", AtomLevel::kGround1)});
  filter_step_counting(all_dark, 0, true);
  EXPECT_THROW(posteriors(all_dark), AllFiltersDead);
}

TEST(Filter, IdenticalHypothesesKeepPriors) {
  ModelConfig base = counting_base(3);
  const auto rec = record_for(base, AtomLevel::kGround1, 8);
  ASSERT_GT(rec.clicks(), 0);
  FilterBank bank(base, {hyp("a", AtomLevel::kGround1, 0.3), hyp("b", AtomLevel::kGround1, 0.7)});
  for (const auto& p : filter_record(bank, rec).posteriors) {
    EXPECT_NEAR(p[0], 0.3, 1e-12);
    EXPECT_NEAR(p[1], 0.7, 1e-12);
  }

  base.detection.scheme = DetectionScheme::kHomodyne;
  const auto hrec = record_for(base, AtomLevel::kGround1, 8);
  FilterBank hbank(base, {hyp("a", AtomLevel::kGround1), hyp("b", AtomLevel::kGround1)});
  for (double q : filter_record(hbank, hrec).error) EXPECT_EQ(q, 0.5);
}

TEST(Filter, RescalingDoesNotChangePosteriors) {
  const ModelConfig base = counting_base(3);
  const auto rec = record_for(base, AtomLevel::kGround1, 21);
  const std::vector<Hypothesis> hs{hyp("0", AtomLevel::kGround0), hyp("1", AtomLevel::kGround1)};
  FilterBank plain(base, hs), scaled(base, hs);
  const auto mask = rec.click_mask();
  for (int k = 0; k < rec.steps; ++k) {
    if (k % 97 == 0) {
      scaled.rescale(0, 1e-200);
      scaled.rescale(1, 3.7e150);
    }
    plain.step_counting(mask[k]);
    scaled.step_counting(mask[k]);
    const auto a = plain.posteriors(), b = scaled.posteriors();
    EXPECT_NEAR(a[0], b[0], 1e-12);
  }
  EXPECT_THROW(plain.rescale(0, 0.0), ConfigError);
}

TEST(Filter, HypothesisOrderIsIrrelevant) {
  const ModelConfig base = counting_base(2);
  const auto rec = record_for(base, AtomLevel::kGround0, 5);
  FilterBank ab(base, {hyp("0", AtomLevel::kGround0, 0.4), hyp("1", AtomLevel::kGround1, 0.6)});
  FilterBank ba(base, {hyp("1", AtomLevel::kGround1, 0.6), hyp("0", AtomLevel::kGround0, 0.4)});
  const auto sa = filter_record(ab, rec), sb = filter_record(ba, rec);
  for (std::size_t k = 0; k < sa.posteriors.size(); ++k) {
    EXPECT_NEAR(sa.posteriors[k][0], sb.posteriors[k][1], 1e-14);
    EXPECT_EQ(sa.error[k], sb.error[k]);
  }
}

TEST(Filter, PosteriorsSumToOne) {
  ModelConfig base;
  base.field = CoherentField{std::sqrt(3.0)};
  base.dt = 1e-2;
  std::vector<Hypothesis> hs{hyp("0", AtomLevel::kGround0, 0.2), hyp("1", AtomLevel::kGround1, 0.5),
                             hyp("e", AtomLevel::kExcited, 0.3)};
  const auto rec = record_for(base, AtomLevel::kGround1, 2);
  FilterBank bank(base, hs);
  for (const auto& p : filter_record(bank, rec).posteriors) {
    double sum = 0.0;
    for (double x : p) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Filter, TrueHypothesisStateMatchesTrajectory) {
  ModelConfig c = counting_base(3);
  c.kappa = 0.3;
  const Model m(c);
  TrajectoryOptions opt;
  opt.state_steps = {250, 500, 750, 1000};
  const auto run = simulate_counting_trajectory(m, 77, opt);
  FilterBank bank(c, {hyp("1", AtomLevel::kGround1, 1.0)});
  const auto mask = run.record.click_mask();
  std::size_t next = 0;
  for (int k = 0; k < run.record.steps; ++k) {
    bank.step_counting(mask[k]);
    if (next < run.states.size() && run.states[next].first == k + 1) {
      EXPECT_LT(max_abs(bank.state(0).matrix - run.states[next].second.matrix), 1e-10);
      ++next;
    }
  }
  EXPECT_EQ(next, run.states.size());

  c.detection.scheme = DetectionScheme::kHomodyne;
  const Model mh(c);
  const auto hrun = simulate_homodyne_trajectory(mh, 78, opt);
  FilterBank hbank(c, {hyp("1", AtomLevel::kGround1, 1.0)});
  next = 0;
  for (int k = 0; k < hrun.record.steps; ++k) {
    hbank.step_homodyne(hrun.record.increments[k]);
    if (next < hrun.states.size() && hrun.states[next].first == k + 1) {
      EXPECT_LT(max_abs(hbank.state(0).matrix - hrun.states[next].second.matrix), 1e-10);
      ++next;
    }
  }
}

TEST(Filter, LikelihoodsMatchPathOracle) {
  ModelConfig c;
  c.field = FockField{1};
  c.cavity_dim = 2;
  c.pulse = FlatTopPulse{0.0, 1.0};
  c.t_final = 1.0;
  c.dt = 0.1;
  oracle::Setup s;
  s.dt = 0.1;
  s.steps = 10;
  s.envelope = [](double t) {
    return oracle::C(t >= 0.0 && t <= 1.0 ? 1.0 : 0.0);
  };
  const std::vector<Hypothesis> hs{hyp("0", AtomLevel::kGround0), hyp("1", AtomLevel::kGround1)};
  const int levels[] = {0, 1};
  double total[2] = {0.0, 0.0};
  for (int click = -1; click < s.steps; ++click) {
    MeasurementRecord rec;
    rec.dt = 0.1;
    rec.steps = 10;
    if (click >= 0) rec.click_steps = {click};
    FilterBank bank(c, hs);
    filter_record(bank, rec);
    std::vector<bool> mask(s.steps, false);
    if (click >= 0) mask[click] = true;
    for (int h = 0; h < 2; ++h) {
      const double p = oracle::path_probability(s, oracle::product_state(2, 1, levels[h]), mask);
      total[h] += p;
      EXPECT_NEAR(std::exp(bank.log_likelihood(h)), p, 1e-9 * p) << click << ' ' << h;
    }
  }
  EXPECT_NEAR(total[0], 1.0, 1e-12);
  EXPECT_NEAR(total[1], 1.0, 1e-12);
}

TEST(Filter, HomodyneSeparatesCoupledFromDecoupledAtom) {
  // A coherent pulse probes a coupled or a nearly decoupled transition.
  ModelConfig base;
  base.field = CoherentField{1.5};
  base.cavity_dim = 13;
  base.pulse = GaussianPulse{2.0, 0.5};
  base.t_final = 4.5;
  base.dt = 1e-2;
  base.detection.scheme = DetectionScheme::kHomodyne;
  Hypothesis coupled = hyp("coupled", AtomLevel::kGround1);
  Hypothesis decoupled = hyp("decoupled", AtomLevel::kGround1);
  decoupled.gamma = 1e-6;
  const std::vector<Hypothesis> hs{coupled, decoupled};
  const auto models = FilterBank::build_models(base, hs);
  const int n = 100;
  int right = 0;
  for (int truth = 0; truth < 2; ++truth) {
    for (int i = 0; i < n; ++i) {
      TrajectoryOptions opt;
      opt.warnings = nullptr;
      const auto rec = simulate_homodyne_trajectory(*models[truth], RandomStream::for_trajectory(31, i), i, opt).record;
      FilterBank bank(models, hs);
      const auto s = filter_record(bank, rec);
      const auto& p = s.posteriors.back();
      if (p[static_cast<std::size_t>(truth)] > 0.5) ++right;
    }
  }
  EXPECT_GT(right, static_cast<int>(0.6 * 2 * n));
}

TEST(Filter, RejectsMismatchedRecords) {
  const ModelConfig base = counting_base(1);
  FilterBank bank(base, {hyp("0", AtomLevel::kGround0), hyp("1", AtomLevel::kGround1)});
  MeasurementRecord rec;
  rec.dt = 0.02;
  rec.steps = 500;
  EXPECT_THROW(filter_record(bank, rec), ConfigError);
  rec.dt = 0.01;
  rec.steps = 1000;
  rec.scheme = DetectionScheme::kHomodyne;
  rec.increments.assign(1000, 0.0);
  EXPECT_THROW(filter_record(bank, rec), ConfigError);
}

TEST(Filter, DiagnosticsStayClean) {
  ModelConfig base = counting_base(4);
  base.kappa = 0.5;
  const auto rec = record_for(base, AtomLevel::kGround1, 12);
  FilterBank bank(base, {hyp("0", AtomLevel::kGround0), hyp("1", AtomLevel::kGround1)});
  filter_record(bank, rec, 50);
  EXPECT_GT(bank.diagnostics().validations, 0);
  EXPECT_LT(bank.diagnostics().max_hermiticity, 1e-10);
  EXPECT_GE(bank.diagnostics().min_eigenvalue, -1e-8);
}
