#pragma once

// Hand-built classifiers and environments shared by the env, agent and
// evaluation tests.

#include <memory>
#include <vector>

#include "oracles.hpp"
#include "packgen/classifiers.hpp"
#include "packgen/env.hpp"
#include "packgen/pcap.hpp"

namespace toy {

/// Depth-one tree: malicious iff feature <= threshold (or > threshold when
/// `malicious_above`).
inline packgen::ClassifierModel stump(int feature, double threshold, bool malicious_above = false) {
  std::vector<packgen::TreeNode> nodes(3);
  nodes[0].feature = feature;
  nodes[0].threshold = threshold;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[1].value = malicious_above ? 0.0 : 1.0;
  nodes[2].value = malicious_above ? 1.0 : 0.0;
  return packgen::ClassifierModel(std::make_shared<packgen::DecisionTree>(nodes, packgen::kFeatureCount));
}

/// Malicious iff the TTL byte is at most `ttl`.
inline packgen::ClassifierModel ttl_at_most(int ttl) { return stump(8, (ttl + 0.5) / 255.0); }

/// Malicious while the don't-fragment bit is set (feature 6 holds the flags
/// byte); SetFragMF is the one action that fools it.
inline packgen::ClassifierModel df_detector() { return stump(6, 0.2, true); }

inline packgen::RawPacket syn() {
  packgen::RawPacket p;
  packgen::parse_frame(oracle::syn_fixture(), p);
  return p;
}

}  // namespace toy
