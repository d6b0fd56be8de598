// Copyright 2026 The slicealign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "slicealign/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "slicealign/error.hpp"
#include "slicealign/version.hpp"

namespace slicealign {

using json = nlohmann::ordered_json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void io_fail(const fs::path& path, const std::string& what) {
  throw Error(ErrorCode::kIo, path.string() + ": " + what);
}

[[noreturn]] void format_fail(const std::string& source, const std::string& what) {
  throw Error(ErrorCode::kFormat, source + ": " + what);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open for reading");
  return in;
}

// Little-endian primitives, independent of host byte order.
template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& in, const std::string& source) {
  std::array<unsigned char, sizeof(U)> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
    format_fail(source, "truncated file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, double value) {
  put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

double get_f32(std::istream& in, const std::string& source) {
  return static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, source)));
}

void expect_magic(std::istream& in, const char* magic, const std::string& source) {
  char got[4] = {};
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0) {
    format_fail(source, std::string("missing ") + magic + " magic");
  }
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, m.data()[i]);
}

Matrix get_matrix(std::istream& in, std::size_t rows, std::size_t cols, const std::string& source) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f32(in, source);
  return m;
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    format_fail(source, e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& source) {
  if (!j.is_object() || !j.contains(key)) format_fail(source, std::string("missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    format_fail(source, std::string("field '") + key + "' has the wrong type");
  }
}

std::string fmt_hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) io_fail(path, "write failed");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- embeddings

void write_embeddings(const fs::path& path, const Matrix& values,
                      const std::vector<std::string>& ids) {
  require_finite(values, "embedding payload");
  if (!ids.empty()) {
    if (ids.size() != static_cast<std::size_t>(values.rows())) {
      throw Error(ErrorCode::kDimensionMismatch, "ids count differs from embedding rows");
    }
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
      throw Error(ErrorCode::kFormat, "embedding ids must be unique");
    }
  }
  ordered_json header;
  header["count"] = values.rows();
  header["dim"] = values.cols();
  header["dtype"] = "f32";
  header["layout"] = "row-major";
  if (!ids.empty()) header["ids"] = ids;
  const std::string text = header.dump();

  std::ofstream out = open_out(path);
  out.write("REMB", 4);
  put_le<std::uint32_t>(out, kEmbeddingFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_matrix(out, values);
  if (!out) io_fail(path, "write failed");
}

EmbeddingFile read_embeddings(const fs::path& path) {
  const std::string source = path.string();
  std::ifstream in = open_in(path);
  expect_magic(in, "REMB", source);
  const auto version = get_le<std::uint32_t>(in, source);
  if (version != kEmbeddingFormatVersion) {
    format_fail(source, "unsupported embedding format version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint32_t>(in, source);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) format_fail(source, "truncated header");
  const json header = parse_json(text, source);
  const auto count = field<std::size_t>(header, "count", source);
  const auto dim = field<std::size_t>(header, "dim", source);
  if (field<std::string>(header, "dtype", source) != "f32") format_fail(source, "dtype must be f32");
  if (field<std::string>(header, "layout", source) != "row-major") {
    format_fail(source, "layout must be row-major");
  }

  EmbeddingFile out;
  if (header.contains("ids")) {
    out.ids = field<std::vector<std::string>>(header, "ids", source);
    if (out.ids.size() != count) format_fail(source, "ids length differs from count");
    if (std::set<std::string>(out.ids.begin(), out.ids.end()).size() != count) {
      format_fail(source, "ids are not unique");
    }
  }
  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::uint64_t>(in.tellg() - payload_start);
  if (payload_bytes != 4ULL * count * dim) {
    format_fail(source, "payload holds " + std::to_string(payload_bytes) + " bytes, expected " +
                            std::to_string(4ULL * count * dim));
  }
  in.seekg(payload_start);
  out.values = get_matrix(in, count, dim, source);
  require_finite(out.values, "embedding payload");
  return out;
}

// --------------------------------------------------------------- checkpoints

void save_checkpoint(const fs::path& path, const TrainState& state,
                     const std::string& config_hash) {
  const std::size_t raw = state.image_head.in_dim();
  const std::size_t proj = state.image_head.out_dim();
  if (state.text_head.in_dim() != raw || state.text_head.out_dim() != proj) {
    throw Error(ErrorCode::kDimensionMismatch, "image and text heads differ in shape");
  }
  ordered_json meta;
  meta["format"] = "slicealign-checkpoint";
  meta["version"] = kVersion;
  meta["raw_dim"] = raw;
  meta["proj_dim"] = proj;
  meta["step"] = state.step;
  meta["config_hash"] = config_hash;
  meta["tensors"] = ordered_json::array({
      {{"name", "image_head.weight"}, {"shape", {raw, proj}}},
      {{"name", "image_head.bias"}, {"shape", {proj}}},
      {{"name", "text_head.weight"}, {"shape", {raw, proj}}},
      {{"name", "text_head.bias"}, {"shape", {proj}}},
      {{"name", "siglip.temperature"}, {"shape", {1}}},
      {{"name", "siglip.bias"}, {"shape", {1}}},
  });
  ordered_json history = ordered_json::array();
  for (const auto& h : state.history) {
    history.push_back({{"epoch", h.epoch},
                       {"lr", h.lr},
                       {"loss_global", h.loss_global},
                       {"loss_prompt", h.loss_prompt},
                       {"loss_loc", h.loss_loc},
                       {"loss_total", h.loss_total}});
  }
  meta["history"] = history;
  const std::string text = meta.dump();

  std::ofstream out = open_out(path);
  out.write("RFKT", 4);
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_matrix(out, state.image_head.weight);
  put_matrix(out, state.image_head.bias.transpose());
  put_matrix(out, state.text_head.weight);
  put_matrix(out, state.text_head.bias.transpose());
  put_f32(out, state.siglip.temperature);
  put_f32(out, state.siglip.bias);
  if (!out) io_fail(path, "write failed");
}

TrainState load_checkpoint(const fs::path& path, CheckpointInfo* info) {
  const std::string source = path.string();
  std::ifstream in = open_in(path);
  expect_magic(in, "RFKT", source);
  const auto version = get_le<std::uint32_t>(in, source);
  if (version != kCheckpointFormatVersion) {
    format_fail(source, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = get_le<std::uint64_t>(in, source);
  if (meta_len > (1ULL << 30)) format_fail(source, "implausible metadata length");
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(meta_len))) {
    format_fail(source, "truncated metadata");
  }
  const json meta = parse_json(text, source);
  const auto raw = field<std::size_t>(meta, "raw_dim", source);
  const auto proj = field<std::size_t>(meta, "proj_dim", source);
  if (raw == 0 || proj == 0) format_fail(source, "zero dimension");

  TrainState s;
  s.step = field<std::int64_t>(meta, "step", source);
  s.image_head.weight = get_matrix(in, raw, proj, source);
  s.image_head.bias = get_matrix(in, 1, proj, source).row(0).transpose();
  s.text_head.weight = get_matrix(in, raw, proj, source);
  s.text_head.bias = get_matrix(in, 1, proj, source).row(0).transpose();
  s.siglip.temperature = get_f32(in, source);
  s.siglip.bias = get_f32(in, source);
  if (in.peek() != std::char_traits<char>::eof()) format_fail(source, "trailing bytes");
  if (meta.contains("history")) {
    for (const auto& h : meta.at("history")) {
      EpochLog log;
      log.epoch = field<int>(h, "epoch", source);
      log.lr = field<double>(h, "lr", source);
      log.loss_global = field<double>(h, "loss_global", source);
      log.loss_prompt = field<double>(h, "loss_prompt", source);
      log.loss_loc = field<double>(h, "loss_loc", source);
      log.loss_total = field<double>(h, "loss_total", source);
      s.history.push_back(log);
    }
  }
  if (info != nullptr) {
    info->raw_dim = raw;
    info->proj_dim = proj;
    info->step = s.step;
    info->config_hash = meta.value("config_hash", std::string());
  }
  return s;
}

// ------------------------------------------------------------------ JSONL

void for_each_json_line(std::istream& in,
                        const std::function<void(const std::string&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, lineno);
  }
}

namespace {

template <typename Fn>
void read_jsonl(const fs::path& path, Fn&& on_object) {
  std::ifstream in = open_in(path);
  const std::string source = path.string();
  for_each_json_line(in, [&](const std::string& line, std::size_t lineno) {
    const std::string where = source + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw Error(ErrorCode::kFormat, where + ": expected a JSON object");
    try {
      on_object(j, where);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, where + ": " + e.what());
    }
  });
}

SeriesGeometry geometry_from(const json& g, const std::string& where) {
  SeriesGeometry s;
  s.series = field<int>(g, "series", where);
  s.num_slices = field<int>(g, "num_slices", where);
  s.slice_thickness_mm = field<double>(g, "slice_thickness_mm", where);
  s.first_slice_offset_mm = g.value("first_slice_offset_mm", 0.0);
  s.axial_length_mm = g.value("axial_length_mm", s.num_slices * s.slice_thickness_mm);
  return s;
}

}  // namespace

std::vector<Report> read_reports(const fs::path& path) {
  std::vector<Report> out;
  read_jsonl(path, [&](const json& j, const std::string& where) {
    Report r;
    r.report_id = field<std::string>(j, "report_id", where);
    r.patient_id = j.value("patient_id", std::string());
    if (j.contains("sections")) {
      const json& sections = j.at("sections");
      if (!sections.is_object()) format_fail(where, "'sections' must be an object");
      for (const auto& [name, text] : sections.items()) {
        if (!text.is_string()) format_fail(where, "section '" + name + "' is not text");
        r.sections.emplace_back(name, text.get<std::string>());
      }
    }
    if (j.contains("full_text")) {
      r.full_text = field<std::string>(j, "full_text", where);
    } else {
      for (const auto& [name, text] : r.sections) {
        if (!r.full_text.empty()) r.full_text += "\n";
        std::string upper = name;
        for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        r.full_text += upper + ": " + text;
      }
    }
    if (r.full_text.empty()) format_fail(where, "report text is empty");
    if (j.contains("organ_descriptions") && !j.at("organ_descriptions").is_null()) {
      r.organ_descriptions = field<std::string>(j, "organ_descriptions", where);
    }
    if (j.contains("no_history_text") && !j.at("no_history_text").is_null()) {
      r.no_history_text = field<std::string>(j, "no_history_text", where);
    }
    if (j.contains("series_geometries")) {
      for (const auto& g : j.at("series_geometries")) {
        r.series_geometries.push_back(geometry_from(g, where));
      }
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_reports(const fs::path& path, const std::vector<Report>& reports) {
  std::ofstream out = open_out(path);
  for (const auto& r : reports) {
    ordered_json j;
    j["report_id"] = r.report_id;
    j["patient_id"] = r.patient_id;
    ordered_json sections = ordered_json::object();
    for (const auto& [name, text] : r.sections) sections[name] = text;
    j["sections"] = sections;
    j["full_text"] = r.full_text;
    if (r.organ_descriptions) j["organ_descriptions"] = *r.organ_descriptions;
    if (r.no_history_text) j["no_history_text"] = *r.no_history_text;
    ordered_json geoms = ordered_json::array();
    for (const auto& g : r.series_geometries) {
      geoms.push_back({{"series", g.series},
                       {"num_slices", g.num_slices},
                       {"slice_thickness_mm", g.slice_thickness_mm},
                       {"first_slice_offset_mm", g.first_slice_offset_mm},
                       {"axial_length_mm", g.axial_length_mm}});
    }
    j["series_geometries"] = geoms;
    out << j.dump() << '\n';
  }
  if (!out) io_fail(path, "write failed");
}

void write_snippets(std::ostream& out, const std::vector<SnippetRecord>& snippets) {
  for (const auto& s : snippets) {
    ordered_json j;
    j["report_id"] = s.report_id;
    j["series"] = s.reference.series;
    j["image"] = s.reference.image;
    j["char_span"] = {s.reference.begin, s.reference.end};
    j["surface_form"] = s.reference.surface;
    j["pattern"] = s.reference.pattern;
    j["text"] = s.text;
    if (s.axial_mm) j["axial_mm"] = *s.axial_mm;
    if (s.depth_index) j["depth_index"] = *s.depth_index;
    out << j.dump() << '\n';
  }
}

ReferenceSets read_reference_sets(const fs::path& path) {
  ReferenceSets out;
  read_jsonl(path, [&](const json& j, const std::string& where) {
    const auto id = field<std::string>(j, "report_id", where);
    auto& set = out[id];
    if (j.contains("references")) {
      for (const auto& pair : j.at("references")) {
        if (!pair.is_array() || pair.size() != 2) {
          format_fail(where, "references must be [series, image] pairs");
        }
        set.emplace(pair[0].get<int>(), pair[1].get<int>());
      }
    } else if (j.contains("series") && j.contains("image")) {
      set.emplace(field<int>(j, "series", where), field<int>(j, "image", where));
    } else {
      format_fail(where, "expected 'references' or 'series'/'image'");
    }
  });
  return out;
}

// ---------------------------------------------------------------- prompts

void write_prompt_bank(const fs::path& path, const PromptBank& bank) {
  std::ofstream out = open_out(path);
  for (const auto& e : bank.entries()) {
    ordered_json j;
    j["finding"] = e.finding;
    j["positives"] = e.positives;
    j["negatives"] = e.negatives;
    out << j.dump() << '\n';
  }
  if (!out) io_fail(path, "write failed");
}

PromptBank read_prompt_bank(const fs::path& path) {
  PromptBank bank;
  read_jsonl(path, [&](const json& j, const std::string& where) {
    PromptEntry e;
    e.finding = field<std::string>(j, "finding", where);
    const auto pos = field<std::vector<std::string>>(j, "positives", where);
    const auto neg = field<std::vector<std::string>>(j, "negatives", where);
    if (pos.size() != kVariantsPerPolarity || neg.size() != kVariantsPerPolarity) {
      throw Error(ErrorCode::kInvalidPromptBank,
                  where + ": each finding needs exactly 3 positive and 3 negative variants");
    }
    std::copy(pos.begin(), pos.end(), e.positives.begin());
    std::copy(neg.begin(), neg.end(), e.negatives.begin());
    try {
      bank.add(std::move(e));
    } catch (const Error& err) {
      throw Error(err.code(), where + ": " + err.detail());
    }
  });
  return bank;
}

// ----------------------------------------------------------------- corpus

void save_corpus(const fs::path& dir, const Corpus& c) {
  c.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) io_fail(dir, "cannot create directory: " + ec.message());

  ordered_json meta;
  meta["format"] = "slicealign-corpus";
  meta["version"] = kVersion;
  meta["count"] = c.size();
  meta["raw_dim"] = c.raw_dim();
  meta["findings"] = c.findings;
  meta["grid"] = {{"count", c.grid.count},
                  {"pitch_mm", c.grid.pitch_mm},
                  {"origin_mm", c.grid.origin_mm}};
  ordered_json counts = ordered_json::array();
  for (std::size_t q = 0; q < c.counts.size(); ++q) {
    counts.push_back({{"finding", c.findings[q]},
                      {"n_pos", c.counts[q].n_pos},
                      {"n_neg", c.counts[q].n_neg},
                      {"weight", c.counts[q].weight}});
  }
  meta["counts"] = counts;
  write_text_file(dir / "corpus.json", meta.dump(2) + "\n");

  write_embeddings(dir / "images.remb", c.images, c.volume_ids);
  write_embeddings(dir / "texts.remb", c.texts, c.volume_ids);
  write_embeddings(dir / "snippets.remb", c.snippets, c.volume_ids);
  write_embeddings(dir / "depth.remb", c.depth);
  write_embeddings(dir / "prompts.remb", c.prompt_embeddings);
  write_prompt_bank(dir / "prompts.jsonl", c.prompts);
  write_reports(dir / "reports.jsonl", c.reports);

  std::ofstream vol = open_out(dir / "volumes.jsonl");
  for (std::size_t i = 0; i < c.size(); ++i) {
    ordered_json j;
    j["volume_id"] = c.volume_ids[i];
    j["patient_id"] = c.patient_ids[i];
    j["split"] = split_name(c.splits[i]);
    j["depth_index"] = c.depth_index[i];
    j["snippet_mm"] = c.snippet_mm[i];
    j["axial_length_mm"] = c.axial_length_mm[i];
    ordered_json labels = ordered_json::object();
    for (std::size_t q = 0; q < c.num_findings(); ++q) {
      if (c.labels[i][q] == Label::kAbsent) continue;
      labels[c.findings[q]] = c.labels[i][q] == Label::kPositive ? 1 : 0;
    }
    j["labels"] = labels;
    vol << j.dump() << '\n';
  }
  if (!vol) io_fail(dir / "volumes.jsonl", "write failed");
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path meta_path = dir / "corpus.json";
  const std::string source = meta_path.string();
  const json meta = parse_json(read_text_file(meta_path), source);
  Corpus c;
  c.findings = field<std::vector<std::string>>(meta, "findings", source);
  const json& grid = meta.at("grid");
  c.grid.count = field<int>(grid, "count", source);
  c.grid.pitch_mm = field<double>(grid, "pitch_mm", source);
  c.grid.origin_mm = field<double>(grid, "origin_mm", source);
  for (const auto& e : meta.at("counts")) {
    FindingCounts fc;
    fc.n_pos = field<std::int64_t>(e, "n_pos", source);
    fc.n_neg = field<std::int64_t>(e, "n_neg", source);
    fc.weight = field<double>(e, "weight", source);
    c.counts.push_back(fc);
  }

  EmbeddingFile images = read_embeddings(dir / "images.remb");
  c.volume_ids = images.ids;
  c.images = std::move(images.values);
  c.texts = read_embeddings(dir / "texts.remb").values;
  c.snippets = read_embeddings(dir / "snippets.remb").values;
  c.depth = read_embeddings(dir / "depth.remb").values;
  c.prompt_embeddings = read_embeddings(dir / "prompts.remb").values;
  c.prompts = read_prompt_bank(dir / "prompts.jsonl");
  c.reports = read_reports(dir / "reports.jsonl");

  std::map<std::string, std::size_t> finding_index;
  for (std::size_t q = 0; q < c.findings.size(); ++q) finding_index[c.findings[q]] = q;
  std::size_t row = 0;
  read_jsonl(dir / "volumes.jsonl", [&](const json& j, const std::string& where) {
    if (row >= c.volume_ids.size() || field<std::string>(j, "volume_id", where) != c.volume_ids[row]) {
      format_fail(where, "volume order differs from images.remb");
    }
    c.patient_ids.push_back(field<std::string>(j, "patient_id", where));
    const auto split = field<std::string>(j, "split", where);
    if (split == "train") {
      c.splits.push_back(Split::kTrain);
    } else if (split == "val") {
      c.splits.push_back(Split::kVal);
    } else if (split == "test") {
      c.splits.push_back(Split::kTest);
    } else {
      format_fail(where, "unknown split '" + split + "'");
    }
    c.depth_index.push_back(field<int>(j, "depth_index", where));
    c.snippet_mm.push_back(field<double>(j, "snippet_mm", where));
    c.axial_length_mm.push_back(field<double>(j, "axial_length_mm", where));
    std::vector<Label> labels(c.findings.size(), Label::kAbsent);
    for (const auto& [name, y] : j.at("labels").items()) {
      const auto it = finding_index.find(name);
      if (it == finding_index.end()) format_fail(where, "unknown finding '" + name + "'");
      labels[it->second] = y.get<int>() != 0 ? Label::kPositive : Label::kNegative;
    }
    c.labels.push_back(std::move(labels));
    ++row;
  });
  c.validate();
  return c;
}

// ------------------------------------------------------------- run config

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) bad("must be an object");
    for (const auto& [key, _] : j_.items()) unseen_.insert(key);
  }

  template <typename T>
  void read(const char* key, T& dst) {
    if (!j_.contains(key)) return;
    unseen_.erase(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(key, "expected true or false");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(key, "expected a number");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) bad(key, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(key, "expected an integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(key, "expected a string");
    }
    dst = v.get<T>();
  }

  void read_list(const char* key, std::vector<std::size_t>& dst) {
    if (!j_.contains(key)) return;
    unseen_.erase(key);
    const json& v = j_.at(key);
    if (!v.is_array()) bad(key, "expected a list of positive integers");
    dst.clear();
    for (const auto& e : v) {
      if (!e.is_number_unsigned() || e.get<std::size_t>() == 0) {
        bad(key, "expected a list of positive integers");
      }
      dst.push_back(e.get<std::size_t>());
    }
  }

  void finish() const {
    if (!unseen_.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "unknown key '" + name_ + "." + *unseen_.begin() + "'");
    }
  }

 private:
  [[noreturn]] void bad(const std::string& what) const {
    throw Error(ErrorCode::kInvalidConfig, "section '" + name_ + "' " + what);
  }
  [[noreturn]] void bad(const char* key, const std::string& what) const {
    throw Error(ErrorCode::kInvalidConfig, name_ + "." + key + ": " + what);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> unseen_;
};

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  const SynthConfig& s = c.synth;
  j["synth"] = {{"n_pairs", s.n_pairs},           {"raw_dim", s.raw_dim},
                {"proj_dim", s.proj_dim},         {"n_findings", s.n_findings},
                {"depth_D", s.depth_D},           {"pitch_mm", s.pitch_mm},
                {"pair_signal", s.pair_signal},   {"label_signal", s.label_signal},
                {"depth_signal", s.depth_signal}, {"noise", s.noise},
                {"seed", s.seed}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"accumulation_steps", t.accumulation_steps},
                {"lambda", t.weights.lambda},
                {"beta", t.weights.beta},
                {"peak_lr", t.peak_lr},
                {"final_lr", t.final_lr},
                {"warmup_steps", t.warmup_steps},
                {"total_steps", t.total_steps},
                {"beta1", t.optimizer.beta1},
                {"beta2", t.optimizer.beta2},
                {"eps", t.optimizer.eps},
                {"weight_decay", t.optimizer.weight_decay},
                {"seed", t.seed},
                {"enable_global", t.enable_global},
                {"enable_prompt", t.enable_prompt},
                {"enable_loc", t.enable_loc},
                {"max_prompt_findings", t.max_prompt_findings},
                {"loc_tau", t.loc_tau},
                {"soft_target_sigma", t.soft_target_sigma},
                {"init_temperature", t.init_temperature},
                {"init_bias", t.init_bias}};
  const EvalProtocols& e = c.eval;
  j["eval"] = {{"split", split_name(e.split)},
               {"retrieval_pool", e.retrieval_pool},
               {"recall_k", e.recall_k},
               {"relevance", e.map_rule.kind == RelevanceRule::Kind::kGraded ? "graded" : "binary"},
               {"relevance_threshold", e.map_rule.threshold},
               {"merlin_pool", e.merlin_pool},
               {"merlin_trials", e.merlin_trials},
               {"B", e.bootstrap.resamples},
               {"level", e.bootstrap.level},
               {"seed", e.bootstrap.seed},
               {"retrieval", e.retrieval},
               {"map", e.map},
               {"classification", e.classification},
               {"merlin", e.merlin},
               {"localization", e.localization}};
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  RunConfig c;
  for (const auto& [key, _] : root.items()) {
    if (key != "synth" && key != "train" && key != "eval") {
      throw Error(ErrorCode::kInvalidConfig, "unknown top-level key '" + key + "'");
    }
  }
  if (root.contains("synth")) {
    Section s(root.at("synth"), "synth");
    SynthConfig& v = c.synth;
    s.read("n_pairs", v.n_pairs);
    s.read("raw_dim", v.raw_dim);
    s.read("proj_dim", v.proj_dim);
    s.read("n_findings", v.n_findings);
    s.read("depth_D", v.depth_D);
    s.read("pitch_mm", v.pitch_mm);
    s.read("pair_signal", v.pair_signal);
    s.read("label_signal", v.label_signal);
    s.read("depth_signal", v.depth_signal);
    s.read("noise", v.noise);
    s.read("seed", v.seed);
    s.finish();
  }
  if (root.contains("train")) {
    Section s(root.at("train"), "train");
    TrainConfig& v = c.train;
    s.read("epochs", v.epochs);
    s.read("batch_size", v.batch_size);
    s.read("accumulation_steps", v.accumulation_steps);
    s.read("lambda", v.weights.lambda);
    s.read("beta", v.weights.beta);
    s.read("peak_lr", v.peak_lr);
    s.read("final_lr", v.final_lr);
    s.read("warmup_steps", v.warmup_steps);
    s.read("total_steps", v.total_steps);
    s.read("beta1", v.optimizer.beta1);
    s.read("beta2", v.optimizer.beta2);
    s.read("eps", v.optimizer.eps);
    s.read("weight_decay", v.optimizer.weight_decay);
    s.read("seed", v.seed);
    s.read("enable_global", v.enable_global);
    s.read("enable_prompt", v.enable_prompt);
    s.read("enable_loc", v.enable_loc);
    s.read("max_prompt_findings", v.max_prompt_findings);
    s.read("loc_tau", v.loc_tau);
    s.read("soft_target_sigma", v.soft_target_sigma);
    s.read("init_temperature", v.init_temperature);
    s.read("init_bias", v.init_bias);
    s.finish();
  }
  if (root.contains("eval")) {
    Section s(root.at("eval"), "eval");
    EvalProtocols& v = c.eval;
    std::string split = split_name(v.split);
    s.read("split", split);
    if (split == "train") {
      v.split = Split::kTrain;
    } else if (split == "val") {
      v.split = Split::kVal;
    } else if (split == "test") {
      v.split = Split::kTest;
    } else {
      throw Error(ErrorCode::kInvalidConfig, "eval.split must be train, val or test");
    }
    s.read("retrieval_pool", v.retrieval_pool);
    s.read_list("recall_k", v.recall_k);
    std::string relevance = "binary";
    s.read("relevance", relevance);
    if (relevance == "binary") {
      v.map_rule.kind = RelevanceRule::Kind::kBinary;
    } else if (relevance == "graded") {
      v.map_rule.kind = RelevanceRule::Kind::kGraded;
    } else {
      throw Error(ErrorCode::kInvalidConfig, "eval.relevance must be binary or graded");
    }
    s.read("relevance_threshold", v.map_rule.threshold);
    s.read("merlin_pool", v.merlin_pool);
    s.read("merlin_trials", v.merlin_trials);
    s.read("B", v.bootstrap.resamples);
    s.read("level", v.bootstrap.level);
    s.read("seed", v.bootstrap.seed);
    s.read("retrieval", v.retrieval);
    s.read("map", v.map);
    s.read("classification", v.classification);
    s.read("merlin", v.merlin);
    s.read("localization", v.localization);
    s.finish();
  }
  c.train.proj_dim = c.synth.proj_dim;

  c.synth.validate();
  c.train.validate();
  c.eval.bootstrap.validate();
  if (c.eval.retrieval_pool == 0) throw Error(ErrorCode::kInvalidConfig, "retrieval_pool must be >= 1");
  if (c.eval.merlin_pool == 0 || c.eval.merlin_trials == 0) {
    throw Error(ErrorCode::kInvalidConfig, "merlin_pool and merlin_trials must be >= 1");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, path.string() + ": cannot open config");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::string run_config_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const RunConfig& cfg) { return fmt_hex(fnv1a64(to_json(cfg).dump())); }

// ---------------------------------------------------------------- reports

std::string epoch_log_json(const EpochLog& log) {
  ordered_json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["loss_global"] = log.loss_global;
  j["loss_prompt"] = log.loss_prompt;
  j["loss_loc"] = log.loss_loc;
  j["loss_total"] = log.loss_total;
  return j.dump();
}

std::string metrics_json(const EvalResult& result) {
  ordered_json metrics = ordered_json::object();
  for (const auto& e : result.report.entries) {
    metrics[e.name] = {{"point", e.ci.point}, {"lower", e.ci.lower}, {"upper", e.ci.upper},
                       {"B", e.resamples},    {"level", e.level},    {"seed", e.seed}};
  }
  ordered_json j;
  j["metrics"] = metrics;
  j["retrieval"] = {{"queries", result.retrieval_queries}, {"pool", result.retrieval_pool}};
  return j.dump(2) + "\n";
}

std::string manifest_json(const Manifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["version"] = kVersion;
  j["config_hash"] = m.config_hash;
  j["seeds"] = {{"synth", m.synth_seed}, {"train", m.train_seed}, {"eval", m.eval_seed}};
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  return j.dump(2) + "\n";
}

}  // namespace slicealign
