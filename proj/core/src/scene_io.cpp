#include "causaltraj/scene_io.hpp"

#include "causaltraj/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>

namespace causaltraj {

using nlohmann::json;

namespace {

Matrix rows_to_matrix(const json& arr, Index expected_cols, const std::string& field) {
  if (!arr.is_array()) throw ValidationError(field, "expected an array of rows");
  const Index r = static_cast<Index>(arr.size());
  Index c = expected_cols;
  if (c < 0) c = r > 0 ? static_cast<Index>(arr[0].size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    const auto& rowj = arr[static_cast<std::size_t>(i)];
    if (!rowj.is_array() || static_cast<Index>(rowj.size()) != c)
      throw ValidationError(field, "row " + std::to_string(i) + " has the wrong width");
    for (Index j = 0; j < c; ++j) m(i, j) = rowj[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

json matrix_to_rows(const Matrix& m) {
  json arr = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    arr.push_back(std::move(r));
  }
  return arr;
}

AgentTrack parse_track(const json& j, const std::string& field, int t_h, int t_f, double dt, bool future_required) {
  AgentTrack t;
  t.agent_class = agent_class_from_string(j.value("class", std::string("vehicle")));
  if (!j.contains("history")) throw ValidationError(field + ".history", "missing");
  Matrix hist = rows_to_matrix(j.at("history"), 2, field + ".history");
  Matrix fut;
  bool future_given = j.contains("future");
  if (future_given) {
    fut = rows_to_matrix(j.at("future"), 2, field + ".future");
  } else if (future_required) {
    throw ValidationError(field + ".future", "missing");
  } else {
    fut = Matrix::Zero(t_f, 2);
  }
  t.history_length = hist.rows();
  t.trajectory.dt = dt;
  t.trajectory.points.resize(hist.rows() + fut.rows(), 2);
  t.trajectory.points << hist, fut;
  const std::size_t frames = static_cast<std::size_t>(t.trajectory.points.rows());
  if (j.contains("valid")) {
    const auto& v = j.at("valid");
    if (!v.is_array()) throw ValidationError(field + ".valid", "expected an array");
    for (const auto& b : v) t.trajectory.valid.push_back(b.is_boolean() ? b.get<bool>() : b.get<int>() != 0);
  } else {
    t.trajectory.valid.assign(frames, true);
    if (!future_given)
      for (std::size_t k = static_cast<std::size_t>(hist.rows()); k < frames; ++k) t.trajectory.valid[k] = false;
  }
  if (j.contains("states")) t.extra_states = rows_to_matrix(j.at("states"), -1, field + ".states");
  (void)t_h;
  return t;
}

json track_to_json(const AgentTrack& t) {
  json j;
  j["class"] = to_string(t.agent_class);
  j["history"] = matrix_to_rows(t.history());
  j["future"] = matrix_to_rows(t.future());
  json v = json::array();
  for (bool b : t.trajectory.valid) v.push_back(b ? 1 : 0);
  j["valid"] = std::move(v);
  if (t.extra_states.size() > 0) j["states"] = matrix_to_rows(t.extra_states);
  return j;
}

}  // namespace

bool is_known_split(const std::string& split) {
  static const char* known[] = {"train", "val", "test", "test_iid", "test_shifted"};
  return std::any_of(std::begin(known), std::end(known), [&](const char* k) { return split == k; });
}

Scene parse_scene(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  try {
    Scene s;
    s.id = j.at("id").get<std::string>();
    s.dt = j.at("dt").get<double>();
    s.history_frames = j.at("t_h").get<int>();
    s.future_frames = j.at("t_f").get<int>();
    s.target = parse_track(j.at("target"), "target", s.history_frames, s.future_frames, s.dt, true);
    for (std::size_t i = 0; i < j.value("neighbors", json::array()).size(); ++i)
      s.neighbors.push_back(parse_track(j["neighbors"][i], "neighbors[" + std::to_string(i) + "]", s.history_frames,
                                        s.future_frames, s.dt, false));
    for (std::size_t i = 0; i < j.value("map", json::array()).size(); ++i) {
      const auto& pj = j["map"][i];
      MapPolyline p;
      p.id = pj.value("id", static_cast<int>(i));
      p.points = rows_to_matrix(pj.at("points"), -1, "map[" + std::to_string(i) + "].points");
      s.map.push_back(std::move(p));
    }
    pad_polylines(s.map);
    const auto& b = j.at("bev");
    s.bev.agent = rows_to_matrix(b.at("agent"), -1, "bev.agent");
    s.bev.map = rows_to_matrix(b.at("map"), -1, "bev.map");
    s.bev.raster = rows_to_matrix(b.at("raster"), -1, "bev.raster");
    s.bev.resolution = b.value("res", 0.5);
    if (j.contains("maneuver") && !j["maneuver"].is_null()) s.maneuver = j["maneuver"].get<int>();
    validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad scene record: ") + e.what(), line_no);
  } catch (const ValidationError& e) {
    if (line_no == 0) throw;
    throw ValidationError(e.field(), std::string(e.what()).substr(e.field().size() + 2) + " (line " +
                                         std::to_string(line_no) + ")");
  }
}

std::string serialize_scene(const Scene& s) {
  json j;
  j["id"] = s.id;
  j["dt"] = s.dt;
  j["t_h"] = s.history_frames;
  j["t_f"] = s.future_frames;
  j["target"] = track_to_json(s.target);
  j["neighbors"] = json::array();
  for (const auto& n : s.neighbors) j["neighbors"].push_back(track_to_json(n));
  j["map"] = json::array();
  for (const auto& p : s.map) j["map"].push_back({{"id", p.id}, {"points", matrix_to_rows(p.points)}});
  j["bev"] = {{"agent", matrix_to_rows(s.bev.agent)},
              {"map", matrix_to_rows(s.bev.map)},
              {"raster", matrix_to_rows(s.bev.raster)},
              {"res", s.bev.resolution}};
  if (s.maneuver) j["maneuver"] = *s.maneuver;
  return j.dump();
}

std::vector<Scene> load_scenes_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<Scene> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_scene(line, n));
  }
  std::stable_sort(out.begin(), out.end(), [](const Scene& a, const Scene& b) { return a.id < b.id; });
  return out;
}

std::vector<Scene> load_dataset(const std::filesystem::path& path, const std::string& split) {
  if (!is_known_split(split)) throw UsageError("unknown split '" + split + "'");
  if (!std::filesystem::exists(path)) throw IoError("no such file or directory: " + path.string());
  if (std::filesystem::is_directory(path)) {
    auto file = path / (split + ".jsonl");
    if (!std::filesystem::exists(file)) throw IoError("missing split file " + file.string());
    return load_scenes_file(file);
  }
  return load_scenes_file(path);
}

void save_scenes_file(const std::filesystem::path& file, const std::vector<Scene>& scenes) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& s : scenes) out << serialize_scene(s) << '\n';
}

}  // namespace causaltraj
