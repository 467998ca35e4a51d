#include <catch2/catch.hpp>

#include "evolattice/repair.hpp"
#include "helpers.hpp"

using namespace evolattice;

namespace {

// Replays a repair log against the pre-repair lattice.
Lattice replay_log(Lattice l, const RepairLog& log) {
  for (const auto& action : log.actions) {
    if (action.kind == RepairAction::Kind::RemovedNode) {
      for (size_t i = 0; i < l.nodes.size(); ++i)
        if (l.nodes[i].name == action.node) {
          l.nodes.erase(l.nodes.begin() + static_cast<long>(i));
          break;
        }
    } else {
      Node* node = l.find(action.node);
      REQUIRE(node != nullptr);
      for (size_t i = 0; i < node->alternatives.size(); ++i)
        if (node->alternatives[i].name == action.alt) {
          node->alternatives.erase(node->alternatives.begin() + static_cast<long>(i));
          break;
        }
    }
  }
  return l;
}

}  // namespace

TEST_CASE("repair is the identity on valid lattices") {
  Lattice l = testutil::zerolm_fixture_lattice();
  // The fixture's unreachable node is pruned by default; retain it to test identity.
  RepairResult keep = repair(l, {true});
  CHECK(keep.ok);
  CHECK(keep.log.empty());
  CHECK(snapshot_equal(keep.lattice, l));

  // With pruning on, exactly the unreachable node goes.
  RepairResult pruned = repair(l);
  CHECK(pruned.ok);
  REQUIRE(pruned.log.actions.size() == 1);
  CHECK(pruned.log.actions[0].reason == "unreachable");
  CHECK(pruned.log.actions[0].node == "spec_top1_vec");
  CHECK(validate(pruned.lattice).empty());
}

TEST_CASE("cycle breaking removes the youngest contributing alternative") {
  std::string text =
      "a:\n"
      "- \"lambda x1: x1 # name: a_keep\"\n"
      "b:\n"
      "- \"lambda a: a # name: b_old\"\n"
      "output:\n"
      "- \"lambda a, b: a + b # name: output_0\"\n";
  Lattice l = deserialize_snapshot(text, {"x1"});
  // a -> b (age 0) and b -> a (age 5) form the cycle; the age-0 edge goes.
  l.find("a")->alternatives.push_back(Alternative::make("a_cyc", "lambda b: b", 0));
  l.find("b")->alternatives[0].age = 5;

  RepairResult r = repair(l);
  REQUIRE(r.ok);
  CHECK(validate(r.lattice).empty());
  REQUIRE(r.log.actions.size() == 1);
  CHECK(r.log.actions[0].kind == RepairAction::Kind::RemovedAlternative);
  CHECK(r.log.actions[0].node == "a");
  CHECK(r.log.actions[0].alt == "a_cyc");
  CHECK(r.log.actions[0].reason == "cycle");
  CHECK(l.find("b") != nullptr);
}

TEST_CASE("cycle tie-breaks prefer the lexicographically greatest node, then index") {
  std::string text =
      "aa:\n"
      "- \"lambda bb: bb # name: aa_0\"\n"
      "- \"lambda x1: x1 # name: aa_1\"\n"
      "bb:\n"
      "- \"lambda aa: aa # name: bb_0\"\n"
      "output:\n"
      "- \"lambda aa: aa # name: output_0\"\n";
  Lattice l = deserialize_snapshot(text, {"x1"});
  RepairResult r = repair(l);
  REQUIRE(r.ok);
  // Equal ages: bb > aa lexicographically, so bb loses its alternative; bb
  // then empties and is pruned, and aa's cyclic reference dangles away while
  // aa_1 keeps the node alive.
  REQUIRE_FALSE(r.log.actions.empty());
  CHECK(r.log.actions[0].node == "bb");
  CHECK(r.log.actions[0].reason == "cycle");
  CHECK(validate(r.lattice).empty());
  REQUIRE(r.lattice.find("aa") != nullptr);
  CHECK(r.lattice.find("aa")->alternatives.size() == 1);
  CHECK(r.lattice.find("aa")->alternatives[0].name == "aa_1");
}

TEST_CASE("a cycle cascade that consumes the output node is a repair failure") {
  std::string text =
      "aa:\n"
      "- \"lambda bb: bb # name: aa_0\"\n"
      "bb:\n"
      "- \"lambda aa: aa # name: bb_0\"\n"
      "output:\n"
      "- \"lambda aa: aa # name: output_0\"\n";
  Lattice l = deserialize_snapshot(text, {});
  RepairResult r = repair(l);
  CHECK_FALSE(r.ok);  // the caller reverts to the previous valid lattice
}

TEST_CASE("deleting every output alternative is a repair failure") {
  Lattice l = testutil::zerolm_fixture_lattice();
  l.find("output")->alternatives.clear();
  RepairResult r = repair(l);
  CHECK_FALSE(r.ok);
}

TEST_CASE("references to removed nodes are cleaned to fixpoint") {
  std::string text =
      "b:\n"
      "- \"lambda ghost: ghost # name: b_0\"\n"
      "c:\n"
      "- \"lambda b: b # name: c_0\"\n"
      "- \"lambda x1: x1 # name: c_1\"\n"
      "output:\n"
      "- \"lambda c: c # name: output_0\"\n";
  Lattice l = deserialize_snapshot(text, {"x1"});
  RepairResult r = repair(l);
  REQUIRE(r.ok);
  CHECK(validate(r.lattice).empty());
  // b_0 dangles on ghost; b empties and is removed; c_0 then dangles on b.
  bool removed_b0 = false, removed_b = false, removed_c0 = false;
  for (const auto& a : r.log.actions) {
    if (a.kind == RepairAction::Kind::RemovedAlternative && a.node == "b" && a.alt == "b_0")
      removed_b0 = a.reason == "unresolved_dependency";
    if (a.kind == RepairAction::Kind::RemovedNode && a.node == "b") removed_b = true;
    if (a.kind == RepairAction::Kind::RemovedAlternative && a.node == "c" && a.alt == "c_0")
      removed_c0 = a.reason == "unresolved_dependency";
  }
  CHECK(removed_b0);
  CHECK(removed_b);
  CHECK(removed_c0);
  CHECK(r.lattice.find("c")->alternatives.size() == 1);
}

TEST_CASE("repair log replay reproduces the post-repair lattice") {
  testutil::Rng rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    Lattice valid = testutil::random_valid_lattice(rng);
    Lattice corrupted = valid;
    testutil::corrupt_lattice(corrupted, rng);
    RepairResult r = repair(corrupted);
    if (!r.ok) continue;
    Lattice replayed = replay_log(corrupted, r.log);
    CHECK(snapshot_equal(replayed, r.lattice));
  }
}

TEST_CASE("fuzz: repair yields validate-clean lattices, idempotent and deterministic") {
  testutil::Rng rng(271828);
  int failures = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Lattice l = testutil::random_valid_lattice(rng);
    std::string what = testutil::corrupt_lattice(l, rng);
    INFO("injected: " << what);

    RepairResult a = repair(l);
    RepairResult b = repair(l);
    REQUIRE(a.ok == b.ok);
    if (!a.ok) {
      ++failures;
      continue;
    }
    CHECK(snapshot_equal(a.lattice, b.lattice));
    REQUIRE(a.log.actions.size() == b.log.actions.size());
    CHECK(validate(a.lattice).empty());

    RepairResult again = repair(a.lattice);
    REQUIRE(again.ok);
    CHECK(again.log.empty());
    CHECK(snapshot_equal(again.lattice, a.lattice));
  }
  // Output-killing corruption is rare but possible.
  CHECK(failures < 100);
}

TEST_CASE("conservatism: repair never adds structure") {
  testutil::Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Lattice l = testutil::random_valid_lattice(rng);
    testutil::corrupt_lattice(l, rng);
    RepairResult r = repair(l);
    if (!r.ok) continue;
    CHECK(r.lattice.nodes.size() <= l.nodes.size());
    for (const auto& node : r.lattice.nodes) {
      const Node* before = l.find(node.name);
      REQUIRE(before != nullptr);
      CHECK(node.alternatives.size() <= before->alternatives.size());
      for (const auto& alt : node.alternatives) CHECK(before->find(alt.name) != nullptr);
    }
  }
}

TEST_CASE("elite preservation: surviving best-path alternatives stay executable") {
  Lattice pristine = testutil::zerolm_fixture_lattice();
  Lattice l = pristine;
  Path best;
  best.assignment = {{"output", 1}, {"zerolm_core", 0}, {"spectral_stability", 0}};
  REQUIRE(path_valid(l, best));
  // Corrupt elsewhere: dangling alternative on zerolm_core.
  l.find("zerolm_core")
      ->alternatives.push_back(Alternative::make("zerolm_core_bad", "lambda nope: nope", 0));
  RepairResult r = repair(l);
  REQUIRE(r.ok);
  // Indices may shift; re-locate the surviving alternatives by name.
  Path migrated;
  for (const auto& [node_name, idx] : best.assignment) {
    const std::string& alt_name =
        pristine.find(node_name)->alternatives[static_cast<size_t>(idx)].name;
    const Node* now = r.lattice.find(node_name);
    REQUIRE(now != nullptr);
    bool located = false;
    for (size_t i = 0; i < now->alternatives.size(); ++i)
      if (now->alternatives[i].name == alt_name) {
        migrated.assignment[node_name] = static_cast<int>(i);
        located = true;
      }
    CHECK(located);
  }
  CHECK(path_valid(r.lattice, migrated));
}

TEST_CASE("retain_unreachable keeps islands but still repairs the rest") {
  Lattice l = testutil::zerolm_fixture_lattice();
  l.find("spectral_stability")
      ->alternatives.push_back(Alternative::make("spectral_stability_bad", "lambda output: output", 0));
  RepairResult r = repair(l, {true});
  REQUIRE(r.ok);
  CHECK(r.lattice.find("spec_top1_vec") != nullptr);
  ValidationReport report = validate(r.lattice, {true});
  CHECK(report.empty());
  bool removed = false;
  for (const auto& a : r.log.actions)
    if (a.alt == "spectral_stability_bad" && a.reason == "references_output") removed = true;
  CHECK(removed);
}
