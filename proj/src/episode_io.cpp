#include "riskid/episode_io.hpp"

#include <fstream>
#include <ostream>

#include "riskid/errors.hpp"

namespace riskid {
namespace {

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ParseError("field '" + field + "': " + what);
}

const Json& require(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

int as_int(const Json& j, const std::string& field) {
  if (!j.is_number_integer()) fail(field, "expected an integer");
  return j.get<int>();
}

std::string as_string(const Json& j, const std::string& field) {
  if (!j.is_string()) fail(field, "expected a string");
  return j.get<std::string>();
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(field, "element " + std::to_string(i) + " is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

Json box_to_json(const BoundingBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

BoundingBox box_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 4) fail(field, "expected 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) fail(field, "expected 4 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

Json episode_to_json(const Episode& e) {
  Json j;
  j["z"] = e.z();
  j["n"] = e.n();
  j["d"] = e.d();
  Json frames = Json::array();
  for (const Frame& f : e.frames) {
    Json jf;
    jf["t"] = f.index;
    Json nodes = Json::array();
    for (const AgentNode& node : f.nodes) {
      Json jn;
      jn["id"] = node.track_id;
      jn["class"] = std::string(to_string(node.cls));
      jn["box"] = box_to_json(node.box);
      jn["feat"] = vector_to_json(node.feature);
      jn["present"] = node.present;
      if (node.face) jn["face"] = vector_to_json(*node.face);
      if (node.attention) jn["attn"] = std::string(to_string(*node.attention));
      nodes.push_back(std::move(jn));
    }
    jf["nodes"] = std::move(nodes);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  j["response"] = std::string(to_string(e.response));
  Json actions = Json::array();
  for (DriverAction a : e.actions) actions.push_back(std::string(to_string(a)));
  j["actions"] = std::move(actions);
  j["situation"] = std::string(to_string(e.situation));
  j["causal_id"] = e.causal_track_id ? Json(*e.causal_track_id) : Json(nullptr);
  j["gt_box"] = e.gt_box ? box_to_json(*e.gt_box) : Json(nullptr);
  return j;
}

Episode episode_from_json(const Json& j, int line) {
  try {
    Episode e;
    const int z = as_int(require(j, "z", ""), "z");
    const int n = as_int(require(j, "n", ""), "n");
    const int d = as_int(require(j, "d", ""), "d");
    const Json& frames = require(j, "frames", "");
    if (!frames.is_array()) fail("frames", "expected an array");
    if (static_cast<int>(frames.size()) != z) {
      fail("frames", "expected z=" + std::to_string(z) + " frames, got " + std::to_string(frames.size()));
    }
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
      const std::string fpath = "frames[" + std::to_string(fi) + "]";
      Frame f;
      f.index = as_int(require(frames[fi], "t", fpath), fpath + ".t");
      const Json& nodes = require(frames[fi], "nodes", fpath);
      if (!nodes.is_array()) fail(fpath + ".nodes", "expected an array");
      if (static_cast<int>(nodes.size()) != n) {
        fail(fpath + ".nodes", "expected n=" + std::to_string(n) + " slots, got " + std::to_string(nodes.size()));
      }
      for (std::size_t s = 0; s < nodes.size(); ++s) {
        const std::string npath = fpath + ".nodes[" + std::to_string(s) + "]";
        const Json& jn = nodes[s];
        AgentNode node;
        node.track_id = as_int(require(jn, "id", npath), npath + ".id");
        const std::string tag = as_string(require(jn, "class", npath), npath + ".class");
        auto cls = parse_agent_class(tag);
        if (!cls) fail(npath + ".class", "unknown AgentClass tag '" + tag + "'");
        node.cls = *cls;
        node.box = box_from_json(require(jn, "box", npath), npath + ".box");
        node.feature = vector_from_json(require(jn, "feat", npath), npath + ".feat");
        if (node.feature.size() != d) {
          fail(npath + ".feat", "expected d=" + std::to_string(d) + " values, got " +
                                    std::to_string(node.feature.size()));
        }
        const Json& present = require(jn, "present", npath);
        if (!present.is_boolean()) fail(npath + ".present", "expected a boolean");
        node.present = present.get<bool>();
        if (auto it = jn.find("face"); it != jn.end() && !it->is_null()) {
          node.face = vector_from_json(*it, npath + ".face");
        }
        if (auto it = jn.find("attn"); it != jn.end() && !it->is_null()) {
          const std::string a = as_string(*it, npath + ".attn");
          auto st = parse_attention(a);
          if (!st) fail(npath + ".attn", "unknown attention label '" + a + "'");
          node.attention = *st;
        }
        f.nodes.push_back(std::move(node));
      }
      e.frames.push_back(std::move(f));
    }
    const std::string resp = as_string(require(j, "response", ""), "response");
    auto r = parse_response(resp);
    if (!r) fail("response", "unknown DriverResponse '" + resp + "'");
    e.response = *r;
    const Json& actions = require(j, "actions", "");
    if (!actions.is_array()) fail("actions", "expected an array");
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const std::string a = as_string(actions[i], "actions[" + std::to_string(i) + "]");
      auto act = parse_action(a);
      if (!act) fail("actions[" + std::to_string(i) + "]", "unknown DriverAction '" + a + "'");
      e.actions.push_back(*act);
    }
    const std::string sit = as_string(require(j, "situation", ""), "situation");
    auto s = parse_situation(sit);
    if (!s) fail("situation", "unknown RiskSituation '" + sit + "'");
    e.situation = *s;
    if (auto it = j.find("causal_id"); it != j.end() && !it->is_null()) {
      e.causal_track_id = as_int(*it, "causal_id");
    }
    if (auto it = j.find("gt_box"); it != j.end() && !it->is_null()) {
      e.gt_box = box_from_json(*it, "gt_box");
    }
    return e;
  } catch (const ParseError& err) {
    if (line > 0) throw ParseError("line " + std::to_string(line) + ": " + err.what());
    throw;
  }
}

std::string episode_to_line(const Episode& e) { return episode_to_json(e).dump(); }

void write_episodes(std::ostream& os, const std::vector<Episode>& episodes) {
  for (const Episode& e : episodes) os << episode_to_line(e) << '\n';
}

void write_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_episodes(os, episodes);
  if (!os) throw Error("failed writing '" + path + "'");
}

}  // namespace riskid
