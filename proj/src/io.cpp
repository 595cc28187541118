#include "glmotion/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace glmotion {

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next non-blank line split into tokens; throws at end of input.
  std::vector<std::string_view> next(const char* what) {
    while (std::getline(in_, line_)) {
      ++number_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      tokens_.clear();
      std::size_t i = 0;
      while (i < line_.size()) {
        while (i < line_.size() && std::isspace(static_cast<unsigned char>(line_[i]))) ++i;
        const std::size_t start = i;
        while (i < line_.size() && !std::isspace(static_cast<unsigned char>(line_[i]))) ++i;
        if (i > start) tokens_.emplace_back(line_.data() + start, i - start);
      }
      if (!tokens_.empty()) return tokens_;
    }
    throw ParseError(location(), std::string("unexpected end of input, expected ") + what);
  }

  bool at_end() {
    std::string rest;
    while (std::getline(in_, rest)) {
      ++number_;
      if (rest.find_first_not_of(" \t\r") != std::string::npos) return false;
    }
    return true;
  }

  std::string location() const { return "line " + std::to_string(number_); }

  double number(std::string_view token) const {
    double v = 0.0;
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw ParseError(location(), "non-numeric token '" + std::string(token) + "'");
    }
    return v;
  }

  long integer(std::string_view token) const {
    long v = 0;
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, v);
    if (ec != std::errc() || ptr != end || v < 0) {
      throw ParseError(location(), "expected a non-negative integer, got '" + std::string(token) + "'");
    }
    return v;
  }

 private:
  std::istream& in_;
  std::string line_;
  std::vector<std::string_view> tokens_;
  std::size_t number_ = 0;
};

std::string run_length(const std::vector<std::size_t>& counts) {
  std::ostringstream os;
  for (std::size_t i = 0; i < counts.size();) {
    std::size_t j = i;
    while (j < counts.size() && counts[j] == counts[i]) ++j;
    if (i) os << ',';
    os << counts[i] << 'x' << (j - i);
    i = j;
  }
  return os.str();
}

}  // namespace

RawSequence parse_ntu_skeleton(std::istream& in, std::size_t center_joint, std::size_t max_persons,
                               std::string id) {
  if (max_persons < 1) throw FormatError("parse_ntu_skeleton: max_persons must be >= 1");
  LineReader reader(in);
  std::vector<std::string_view> tok;
  try {
    tok = reader.next("frame count");
  } catch (const ParseError&) {
    throw FormatError("parse_ntu_skeleton: empty stream");
  }
  const long frames = reader.integer(tok.front());
  if (frames < 1) throw FormatError("parse_ntu_skeleton: frame count must be >= 1");

  RawSequence seq;
  seq.frames = static_cast<std::size_t>(frames);
  seq.persons = max_persons;
  seq.joints = kNtuJoints;
  seq.center_joint = center_joint;
  seq.coords.assign(seq.frames * seq.persons * seq.joints * 3, 0.0);
  std::vector<std::size_t> bodies_per_frame(seq.frames, 0);

  for (std::size_t t = 0; t < seq.frames; ++t) {
    tok = reader.next("body count");
    const auto bodies = static_cast<std::size_t>(reader.integer(tok.front()));
    bodies_per_frame[t] = bodies;
    for (std::size_t b = 0; b < bodies; ++b) {
      reader.next("body metadata");
      tok = reader.next("joint count");
      const long joint_count = reader.integer(tok.front());
      if (joint_count != static_cast<long>(kNtuJoints)) {
        throw FormatError("parse_ntu_skeleton: " + reader.location() + ": expected 25 joints, got " +
                          std::to_string(joint_count));
      }
      for (std::size_t k = 0; k < kNtuJoints; ++k) {
        tok = reader.next("joint line");
        if (tok.size() < 3) throw ParseError(reader.location(), "joint line needs at least x y z");
        Vec3 q{reader.number(tok[0]), reader.number(tok[1]), reader.number(tok[2])};
        for (std::size_t f = 3; f < tok.size(); ++f) reader.number(tok[f]);
        if (b < max_persons) seq.set_joint(t, b, k, q);
      }
    }
  }
  if (!reader.at_end()) throw ParseError(reader.location(), "trailing content after last frame");
  seq.id = std::move(id) + "@bodies=" + run_length(bodies_per_frame);
  seq.validate();
  return seq;
}

RawSequence parse_ntu_skeleton_file(const std::filesystem::path& path, std::size_t center_joint,
                                    std::size_t max_persons) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_ntu_skeleton(in, center_joint, max_persons, path.stem().string());
}

std::string write_canonical(const RawSequence& seq) {
  seq.validate();
  nlohmann::ordered_json j;
  j["version"] = kCanonicalVersion;
  j["id"] = seq.id;
  j["label"] = seq.label ? nlohmann::ordered_json(*seq.label) : nlohmann::ordered_json(nullptr);
  j["T"] = seq.frames;
  j["P"] = seq.persons;
  j["K"] = seq.joints;
  j["center_joint"] = seq.center_joint;
  j["coords"] = seq.coords;
  return j.dump() + "\n";
}

namespace {

std::size_t count_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError(std::string("$.") + key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

RawSequence read_canonical(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("$", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("$", "expected an object");
  static const std::set<std::string> known{"version", "id", "label", "T", "P", "K", "center_joint", "coords"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ParseError("$." + key, "unknown field");
  }
  for (const auto& key : known) {
    if (!j.contains(key)) throw ParseError("$." + key, "missing field");
  }
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kCanonicalVersion) {
    throw ParseError("$.version", "unsupported version");
  }
  if (!j["id"].is_string()) throw ParseError("$.id", "expected a string");
  RawSequence seq;
  seq.id = j["id"].get<std::string>();
  if (j["label"].is_null()) {
    seq.label.reset();
  } else if (j["label"].is_number_integer()) {
    seq.label = j["label"].get<int>();
  } else {
    throw ParseError("$.label", "expected an integer or null");
  }
  seq.frames = count_field(j, "T");
  seq.persons = count_field(j, "P");
  seq.joints = count_field(j, "K");
  seq.center_joint = count_field(j, "center_joint");
  const auto& coords = j["coords"];
  if (!coords.is_array()) throw ParseError("$.coords", "expected an array");
  seq.coords.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!coords[i].is_number()) throw ParseError("$.coords[" + std::to_string(i) + "]", "expected a number");
    seq.coords.push_back(coords[i].get<double>());
  }
  if (seq.frames == 0) throw FormatError("canonical sequence '" + seq.id + "': T must be >= 1");
  if (seq.coords.size() != seq.frames * seq.persons * seq.joints * 3) {
    throw ParseError("$.coords", "expected T*P*K*3 = " +
                                     std::to_string(seq.frames * seq.persons * seq.joints * 3) +
                                     " values, got " + std::to_string(seq.coords.size()));
  }
  seq.validate();
  return seq;
}

void save_sequence(const RawSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << write_canonical(seq);
}

RawSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return read_canonical(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + e.location(), e.what());
  }
}

void write_dataset(const std::filesystem::path& dir, const std::vector<RawSequence>& seqs) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%06zu.json", i);
    save_sequence(seqs[i], dir / name);
    manifest << name << '\n';
  }
}

std::vector<RawSequence> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("no manifest.txt in " + dir.string());
  std::vector<RawSequence> seqs;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    seqs.push_back(load_sequence(dir / line));
  }
  return seqs;
}

}  // namespace glmotion
