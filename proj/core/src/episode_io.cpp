#include "mplab/episode_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace mplab::io {

using nlohmann::json;
using world::CellLabel;
using world::SemanticGrid;
using world::kLabelCount;

namespace {

json rle_encode(const SemanticGrid& g) {
  json out = json::array();
  std::size_t i = 0;
  while (i < g.cells.size()) {
    const std::uint8_t label = static_cast<std::uint8_t>(g.cells[i]);
    std::size_t run = 1;
    while (i + run < g.cells.size() &&
           static_cast<std::uint8_t>(g.cells[i + run]) == label)
      ++run;
    out.push_back(run);
    out.push_back(label);
    i += run;
  }
  return out;
}

SemanticGrid rle_decode(const json& arr, int w, int h) {
  if (!arr.is_array() || arr.size() % 2 != 0)
    throw std::runtime_error("episode load: malformed run-length grid");
  SemanticGrid g(w, h);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < arr.size(); i += 2) {
    const std::size_t run = arr[i].get<std::size_t>();
    const int label = arr[i + 1].get<int>();
    if (label < 0 || label >= kLabelCount)
      throw std::runtime_error("episode load: grid label out of range");
    if (pos + run > g.cells.size())
      throw std::runtime_error("episode load: run-length grid overflows " +
                               std::to_string(g.cells.size()) + " cells");
    for (std::size_t j = 0; j < run; ++j)
      g.cells[pos + j] = static_cast<CellLabel>(label);
    pos += run;
  }
  if (pos != g.cells.size())
    throw std::runtime_error("episode load: run-length grid covers " +
                             std::to_string(pos) + " of " +
                             std::to_string(g.cells.size()) + " cells");
  return g;
}

json ego_to_json(const geom::Egomotion& e) {
  return json::array({e.tx, e.ty, e.theta, e.scale});
}

geom::Egomotion ego_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("episode load: egomotion needs 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

json agent_to_json(const world::AgentState& a) {
  json j;
  j["id"] = a.id;
  j["cls"] = a.cls == world::AgentClass::kPedestrian ? "ped" : "veh";
  j["pos"] = json::array({a.px, a.py});
  j["dir"] = json::array({a.dirx, a.diry});
  j["speed"] = a.speed;
  j["ext"] = json::array({a.w, a.h});
  j["policy"] = static_cast<int>(a.policy);
  j["road"] = a.road;
  j["side"] = a.side;
  j["sdir"] = json::array({a.sdirx, a.sdiry});
  j["target"] = json::array({a.tx, a.ty});
  return j;
}

world::AgentState agent_from_json(const json& j) {
  world::AgentState a;
  a.id = j.at("id").get<int>();
  const std::string cls = j.at("cls").get<std::string>();
  if (cls == "ped")
    a.cls = world::AgentClass::kPedestrian;
  else if (cls == "veh")
    a.cls = world::AgentClass::kVehicle;
  else
    throw std::runtime_error("episode load: unknown agent class '" + cls + "'");
  a.px = j.at("pos")[0].get<double>();
  a.py = j.at("pos")[1].get<double>();
  a.dirx = j.at("dir")[0].get<double>();
  a.diry = j.at("dir")[1].get<double>();
  a.speed = j.at("speed").get<double>();
  a.w = j.at("ext")[0].get<double>();
  a.h = j.at("ext")[1].get<double>();
  const int policy = j.at("policy").get<int>();
  if (policy < 0 || policy > 2)
    throw std::runtime_error("episode load: policy state out of range");
  a.policy = static_cast<world::PolicyState>(policy);
  a.road = j.at("road").get<int>();
  a.side = j.at("side").get<int>();
  a.sdirx = j.at("sdir")[0].get<double>();
  a.sdiry = j.at("sdir")[1].get<double>();
  a.tx = j.at("target")[0].get<double>();
  a.ty = j.at("target")[1].get<double>();
  return a;
}

json config_to_json(const world::WorldConfig& c) {
  json j;
  j["view"] = json::array({c.view_w, c.view_h});
  j["margin"] = c.margin;
  j["episode_len"] = c.episode_len;
  j["pedestrians"] = c.pedestrians;
  j["vehicles"] = c.vehicles;
  j["p_cross"] = c.p_cross;
  j["vehicle_p_straight"] = c.vehicle_p_straight;
  j["ped_speed"] = c.ped_speed;
  j["vehicle_speed"] = c.vehicle_speed;
  j["ego_zoom"] = c.ego_zoom;
  j["ego_drift"] = c.ego_drift;
  j["visibility_threshold"] = c.visibility_threshold;
  j["branch_cap"] = c.branch_cap;
  j["scenario"] = c.scenario;
  return j;
}

world::WorldConfig config_from_json(const json& j) {
  world::WorldConfig c;
  c.view_w = j.at("view")[0].get<int>();
  c.view_h = j.at("view")[1].get<int>();
  c.margin = j.at("margin").get<int>();
  c.episode_len = j.at("episode_len").get<int>();
  c.pedestrians = j.at("pedestrians").get<int>();
  c.vehicles = j.at("vehicles").get<int>();
  c.p_cross = j.at("p_cross").get<double>();
  c.vehicle_p_straight = j.at("vehicle_p_straight").get<double>();
  c.ped_speed = j.at("ped_speed").get<double>();
  c.vehicle_speed = j.at("vehicle_speed").get<double>();
  c.ego_zoom = j.at("ego_zoom").get<double>();
  c.ego_drift = j.at("ego_drift").get<double>();
  c.visibility_threshold = j.at("visibility_threshold").get<double>();
  c.branch_cap = j.at("branch_cap").get<int>();
  c.scenario = j.at("scenario").get<std::string>();
  return c;
}

}  // namespace

void save_episode(const world::Episode& ep, std::ostream& os) {
  os << kEpisodeMagic << "\n";

  json header;
  header["type"] = "header";
  header["seed"] = ep.seed;
  header["config"] = config_to_json(ep.cfg);
  json roads = json::array();
  for (const auto& r : ep.map.roads)
    roads.push_back(json::array({r.vertical ? 1 : 0, r.lo, r.hi, r.a, r.b}));
  json obstructions = json::array();
  for (const auto& o : ep.map.obstructions)
    obstructions.push_back(json::array({o.x0, o.y0, o.x1, o.y1}));
  header["map"] = {{"w", ep.map.w},
                   {"h", ep.map.h},
                   {"roads", roads},
                   {"obstructions", obstructions}};
  os << header.dump() << "\n";

  for (int t = 0; t < ep.length(); ++t) {
    const world::Frame& fr = ep.frames[static_cast<std::size_t>(t)];
    json rec;
    rec["type"] = "frame";
    rec["t"] = t;
    rec["grid"] = rle_encode(fr.full);
    json agents = json::array();
    for (const auto& a : fr.agents) agents.push_back(agent_to_json(a));
    rec["agents"] = agents;
    rec["ego"] = ego_to_json(fr.ego);
    rec["view"] = ego_to_json(fr.view);
    json decisions = json::array();
    for (const auto& d : fr.decisions) {
      json opts = json::array();
      for (const auto& o : d.options) opts.push_back(json::array({o.id, o.prob}));
      decisions.push_back({{"agent", d.agent},
                           {"step", d.step},
                           {"chosen", d.chosen_id},
                           {"options", opts}});
    }
    rec["decisions"] = decisions;
    os << rec.dump() << "\n";
  }
}

void save_episode_file(const world::Episode& ep, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("episode save: cannot open '" + path + "'");
  save_episode(ep, os);
  if (!os) throw std::runtime_error("episode save: write failed for '" + path + "'");
}

world::Episode load_episode(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kEpisodeMagic)
    throw std::runtime_error("episode load: missing '" + std::string(kEpisodeMagic) +
                             "' header line");
  if (!std::getline(is, line))
    throw std::runtime_error("episode load: missing header record");
  json header = json::parse(line);
  if (header.at("type") != "header")
    throw std::runtime_error("episode load: first record is not the header");

  world::Episode ep;
  ep.seed = header.at("seed").get<std::uint64_t>();
  ep.cfg = config_from_json(header.at("config"));
  const json& jmap = header.at("map");
  ep.map.w = jmap.at("w").get<int>();
  ep.map.h = jmap.at("h").get<int>();
  for (const auto& r : jmap.at("roads"))
    ep.map.roads.push_back({r[0].get<int>() != 0, r[1].get<int>(), r[2].get<int>(),
                            r[3].get<int>(), r[4].get<int>()});
  for (const auto& o : jmap.at("obstructions"))
    ep.map.obstructions.push_back(
        {o[0].get<int>(), o[1].get<int>(), o[2].get<int>(), o[3].get<int>()});
  world::finalize_world(ep.map);

  int expected_t = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    if (rec.at("type") != "frame")
      throw std::runtime_error("episode load: unexpected record type");
    if (rec.at("t").get<int>() != expected_t)
      throw std::runtime_error("episode load: frame " + std::to_string(expected_t) +
                               " missing or out of order");
    world::Frame fr;
    fr.view = ego_from_json(rec.at("view"));
    fr.ego = ego_from_json(rec.at("ego"));
    fr.full = rle_decode(rec.at("grid"), ep.cfg.view_w, ep.cfg.view_h);
    fr.statics =
        world::render_static(ep.map, fr.view, ep.cfg.view_w, ep.cfg.view_h);
    for (const auto& a : rec.at("agents")) fr.agents.push_back(agent_from_json(a));
    for (const auto& d : rec.at("decisions")) {
      world::DecisionPoint dp;
      dp.agent = d.at("agent").get<int>();
      dp.step = d.at("step").get<int>();
      dp.chosen_id = d.at("chosen").get<int>();
      double total = 0.0;
      for (const auto& o : d.at("options")) {
        dp.options.push_back({o[0].get<int>(), o[1].get<double>()});
        total += dp.options.back().prob;
      }
      if (std::abs(total - 1.0) > 1e-9)
        throw std::runtime_error(
            "episode load: decision probabilities sum to " + std::to_string(total));
      fr.decisions.push_back(std::move(dp));
    }
    ep.frames.push_back(std::move(fr));
    ++expected_t;
  }
  if (ep.length() != ep.cfg.episode_len)
    throw std::runtime_error("episode load: found " + std::to_string(ep.length()) +
                             " frames, config says " +
                             std::to_string(ep.cfg.episode_len));
  return ep;
}

world::Episode load_episode_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("episode load: cannot open '" + path + "'");
  return load_episode(is);
}

std::string episode_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%06d.ep", index);
  return buf;
}

std::vector<world::Episode> load_episode_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::runtime_error("episode load: '" + dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ep")
      names.push_back(entry.path().string());
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw std::runtime_error("episode load: no .ep files in '" + dir + "'");
  std::vector<world::Episode> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(load_episode_file(n));
  return out;
}

}  // namespace mplab::io
