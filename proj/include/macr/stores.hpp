#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "macr/backend.hpp"
#include "macr/mediator.hpp"
#include "macr/reasoner.hpp"
#include "macr/treemodel.hpp"

namespace macr {

// Inference store: one JSON line per (tree, generation) with the embedding
// and the full debate transcript.
std::string serialize_inference(const Inference& inf);
Inference parse_inference(std::string_view line);

// Reads a whole inference store grouped by tree id, in order of first appearance.
std::vector<std::pair<std::string, std::vector<Inference>>> read_inference_store(std::istream& in);

// Mediator store: one JSON line per tree with seed, inertia, cluster sizes,
// exact probabilities ("size/n") and the representatives.
std::string serialize_mediators(const MediatorSet& set);

// Deterministic responder for the offline backend. Replies depend only on the
// request content: debate roles get structured analyses, decision roles a
// label chosen by hashing the prompt.
ChatResponder make_scripted_responder(const RiskLabelSet& labels);

}  // namespace macr
