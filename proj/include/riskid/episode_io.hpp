#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "riskid/core_types.hpp"

namespace riskid {

using Json = nlohmann::ordered_json;

// Episode JSONL codec. One episode per line:
// {"z","n","d","frames":[{"t","nodes":[{"id","class","box","feat","present"}]}],
//  "response","actions","situation","causal_id","gt_box"}
// Person nodes may carry the optional "face" embedding and "attn" label.
Json episode_to_json(const Episode& e);

// Throws ParseError naming the offending field; `line` is prefixed when > 0.
Episode episode_from_json(const Json& j, int line = 0);

std::string episode_to_line(const Episode& e);
void write_episodes(std::ostream& os, const std::vector<Episode>& episodes);
void write_episodes(const std::string& path, const std::vector<Episode>& episodes);

Json box_to_json(const BoundingBox& b);
BoundingBox box_from_json(const Json& j, const std::string& field);

}  // namespace riskid
