#include <gtest/gtest.h>

#include <sstream>

#include "imitlab/dataset.hpp"
#include "imitlab/envs.hpp"
#include "imitlab/error.hpp"
#include "test_util.hpp"

using namespace imitlab;

namespace {

struct Fixture {
  TabularMDP mdp = imitlab::testing::random_mdp(4, 2, 6, 12);
  Policy expert = optimal_expert(mdp);
};

}  // namespace

TEST(Dataset, CollectIsCompleteAndReproducible) {
  Fixture f;
  const Dataset ds = collect_expert(f.mdp, f.expert, 5, 3);
  EXPECT_EQ(ds, collect_expert(f.mdp, f.expert, 5, 3));
  EXPECT_NE(ds, collect_expert(f.mdp, f.expert, 5, 4));
  EXPECT_EQ(ds.total_pairs(), 30);
  EXPECT_TRUE(ds.has_all_successors());
  EXPECT_NO_THROW(validate_dataset(ds));
  for (const auto& tr : ds.trajectories)
    for (const auto& st : tr.steps) EXPECT_EQ(st.a, f.expert.greedy_action(st.t, st.s));
  EXPECT_THROW(collect_expert(f.mdp, f.expert, 0, 1), ArgumentError);
}

TEST(Dataset, EmpiricalFrequenciesMatchOccupancy) {
  // reset_cliff eps=0.3, m=1000: t=2 state frequencies within 3 sigma of d_2.
  EnvSpec s;
  s.family = EnvFamily::reset_cliff;
  s.num_states = 5;
  s.num_actions = 2;
  s.horizon = 4;
  s.slip = 0.3;
  const TabularMDP m = build_env(s);
  const Policy expert = optimal_expert(m);
  const int n = 1000;
  const Visitation v(collect_expert(m, expert, n, 17), m.dims());
  const OccupancyMeasure d = compute_occupancy(m, expert);
  for (int st = 0; st < 5; ++st) {
    const double p = d.state(2, st);
    EXPECT_NEAR(v.state_count(2, st) / double(n), p, 3 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
}

TEST(Dataset, SubsampleSpacingAndOffsets) {
  Fixture f;
  const Dataset ds = collect_expert(f.mdp, f.expert, 20, 1);
  const Dataset sub = subsample(ds, 3, 9);
  EXPECT_FALSE(sub.complete);
  EXPECT_EQ(sub.subsample_rate, 3);
  EXPECT_NO_THROW(validate_dataset(sub));
  std::vector<int> offsets(3, 0);
  for (std::size_t i = 0; i < sub.trajectories.size(); ++i) {
    const auto& kept = sub.trajectories[i].steps;
    ASSERT_EQ(kept.size(), 2u);
    ++offsets[static_cast<std::size_t>(kept[0].t - 1)];
    EXPECT_EQ(kept[1].t, kept[0].t + 3);
    EXPECT_EQ(kept[0], ds.trajectories[i].steps[static_cast<std::size_t>(kept[0].t - 1)]);
  }
  for (int c : offsets) EXPECT_GT(c, 0);
  EXPECT_EQ(subsample(ds, 1, 9).complete, true);
  EXPECT_EQ(subsample(ds, 1, 9).trajectories, ds.trajectories);
  EXPECT_FALSE(subsample(ds, 3, 9, false).has_all_successors());
  EXPECT_THROW(subsample(ds, 0, 9), ArgumentError);
  EXPECT_THROW(subsample(sub, 2, 9), ArgumentError);
}

TEST(Dataset, ValidateRejectsBrokenTrajectories) {
  Dataset ds;
  ds.horizon = 2;
  ds.trajectories = {Trajectory{{{1, 0, 0, 1}, {2, 0, 0, 1}}}};
  EXPECT_THROW(validate_dataset(ds), DataError);  // successor mismatch
  ds.trajectories = {Trajectory{{{1, 0, 0, 1}}}};
  EXPECT_THROW(validate_dataset(ds), DataError);  // too short
  ds.trajectories = {Trajectory{{{2, 0, 0, 1}, {1, 1, 0, 1}}}};
  EXPECT_THROW(validate_dataset(ds), DataError);  // order
  ds.trajectories = {Trajectory{{{1, 0, 0, 1}, {2, 1, 0, 0}}}};
  EXPECT_NO_THROW(validate_dataset(ds));
}

TEST(Dataset, VisitationCounts) {
  Dataset ds;
  ds.horizon = 2;
  ds.trajectories = {Trajectory{{{1, 0, 1, 1}, {2, 1, 0, 0}}}, Trajectory{{{1, 0, 1, 2}, {2, 2, 1, 2}}}};
  const Visitation v(ds, Dims{3, 2, 2});
  EXPECT_EQ(v.count(1, 0, 1), 2);
  EXPECT_EQ(v.state_count(2, 1), 1);
  EXPECT_EQ(v.total_count(1, 0), 1);
  EXPECT_EQ(v.total_state_count(0), 2);
  EXPECT_EQ(v.visited(2), (std::vector<int>{1, 2}));
  EXPECT_EQ(v.pairs_at(1), 2);
  EXPECT_THROW(Visitation(ds, Dims{3, 2, 3}), DimensionError);
  EXPECT_THROW(Visitation(ds, Dims{2, 2, 2}), DimensionError);
}

TEST(Dataset, TextRoundTrip) {
  Fixture f;
  const Dataset ds = subsample(collect_expert(f.mdp, f.expert, 4, 2), 2, 5, false);
  std::stringstream io;
  write_dataset(io, ds);
  EXPECT_EQ(read_dataset(io), ds);
  const Dataset full = collect_expert(f.mdp, f.expert, 3, 2);
  std::stringstream io2;
  write_dataset(io2, full);
  const std::string text = io2.str();
  EXPECT_EQ(text.rfind("# imitlab dataset v1\n", 0), 0u);
  EXPECT_EQ(read_dataset(io2), full);
}

TEST(Dataset, ReadRejectsMalformed) {
  std::stringstream bad("# imitlab dataset v1\nm 1\nH 2\ncomplete true\nsubsample_rate none\n"
                        "traj_id,t,s,a,s_next\n0,1,x,0,1\n");
  EXPECT_THROW(read_dataset(bad), DataError);
  std::stringstream magic("# other\n");
  EXPECT_THROW(read_dataset(magic), DataError);
}
