#include "typecase/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace typecase {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw DatasetError(ErrorCode::SchemaError, path + ": " + what, path);
}

const json& field(const json& obj, const char* name, const std::string& path) {
  if (!obj.is_object()) schema_error(path, "expected an object");
  auto it = obj.find(name);
  if (it == obj.end()) schema_error(path, std::string("missing field '") + name + "'");
  return *it;
}

std::int64_t get_int(const json& obj, const char* name, const std::string& path) {
  const json& v = field(obj, name, path);
  if (!v.is_number_integer()) schema_error(path + "." + name, "expected an integer");
  return v.get<std::int64_t>();
}

int get_int32(const json& obj, const char* name, const std::string& path) {
  const std::int64_t v = get_int(obj, name, path);
  if (v < INT32_MIN || v > INT32_MAX) schema_error(path + "." + name, "integer out of range");
  return static_cast<int>(v);
}

std::string get_string(const json& obj, const char* name, const std::string& path) {
  const json& v = field(obj, name, path);
  if (!v.is_string()) schema_error(path + "." + name, "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const json& obj, const char* name, const std::string& path) {
  auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) schema_error(path + "." + name, "expected a string");
  return it->get<std::string>();
}

const json& get_array(const json& obj, const char* name, const std::string& path) {
  const json& v = field(obj, name, path);
  if (!v.is_array()) schema_error(path + "." + name, "expected an array");
  return v;
}

std::vector<SegmentId> get_segment_ids(const json& obj, const char* name, const std::string& path) {
  std::vector<SegmentId> out;
  for (const auto& v : get_array(obj, name, path)) {
    if (!v.is_number_integer()) schema_error(path + "." + name, "expected integer ids");
    out.push_back(SegmentId{v.get<std::int64_t>()});
  }
  return out;
}

Edit parse_edit(const json& e, const std::string& path) {
  const std::string op = get_string(e, "op", path);
  Edit edit;
  if (op == "move") {
    edit.op = MoveSegment{SegmentId{get_int(e, "segment", path)}, BlockId{get_int(e, "from", path)},
                          BlockId{get_int(e, "to", path)}};
  } else if (op == "merge") {
    edit.op = MergeBlocks{BlockId{get_int(e, "src", path)}, BlockId{get_int(e, "dst", path)},
                          get_segment_ids(e, "moved", path)};
  } else if (op == "detach") {
    edit.op = DetachSegment{SegmentId{get_int(e, "segment", path)}, BlockId{get_int(e, "from", path)},
                            BlockId{get_int(e, "new_block", path)}};
  } else {
    schema_error(path + ".op", "unknown edit op '" + op + "'");
  }
  edit.revision = get_int(e, "revision", path);
  edit.timestamp = get_string(e, "ts", path);
  return edit;
}

json edit_to_json(const Edit& edit) {
  json j;
  std::visit([&](const auto& op) {
    using T = std::decay_t<decltype(op)>;
    if constexpr (std::is_same_v<T, MoveSegment>) {
      j["op"] = "move";
      j["segment"] = op.segment.value;
      j["from"] = op.from.value;
      j["to"] = op.to.value;
    } else if constexpr (std::is_same_v<T, MergeBlocks>) {
      j["op"] = "merge";
      j["src"] = op.src.value;
      j["dst"] = op.dst.value;
      json moved = json::array();
      for (SegmentId s : op.moved) moved.push_back(s.value);
      j["moved"] = std::move(moved);
    } else {
      j["op"] = "detach";
      j["segment"] = op.segment.value;
      j["from"] = op.from.value;
      j["new_block"] = op.new_block.value;
    }
  }, edit.op);
  j["revision"] = edit.revision;
  j["ts"] = edit.timestamp;
  return j;
}

void put_key(json& j, const CharacterKey& key) {
  j["text"] = key.text;
  if (key.jibo) j["jibo"] = *key.jibo;
}

// Member lists derived from segment references, keeping empty blocks so
// validation can report them.
void derive_membership(Dataset& ds) {
  std::sort(ds.spreads.begin(), ds.spreads.end(), [](const Spread& a, const Spread& b) { return a.id < b.id; });
  for (auto& spread : ds.spreads) {
    std::stable_sort(spread.lines.begin(), spread.lines.end(),
                     [](const LineLayout& a, const LineLayout& b) { return a.index < b.index; });
  }
  std::stable_sort(ds.blocks.begin(), ds.blocks.end(), [](const Block& a, const Block& b) { return a.id < b.id; });
  std::stable_sort(ds.segments.begin(), ds.segments.end(),
                   [](const Segment& a, const Segment& b) { return a.id < b.id; });
  std::unordered_map<BlockId, std::size_t> pos;
  for (std::size_t i = 0; i < ds.blocks.size(); ++i) pos.emplace(ds.blocks[i].id, i);
  std::vector<const Segment*> ordered;
  for (const auto& s : ds.segments) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Segment* a, const Segment* b) { return reading_order_less(*a, *b); });
  for (const Segment* s : ordered) {
    if (auto it = pos.find(s->block_id); it != pos.end()) ds.blocks[it->second].member_ids.push_back(s->id);
  }
}

}  // namespace

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (const auto& e : report.errors) out << "error " << e.code << " [" << e.entity << "]: " << e.message << "\n";
  for (const auto& w : report.warnings) out << "warning " << w.code << " [" << w.entity << "]: " << w.message << "\n";
  out << report.errors.size() << " error(s), " << report.warnings.size() << " warning(s)\n";
  return out.str();
}

bool height_off_unit(int h_px, double unit_px, double tolerance) {
  if (unit_px <= 0) return false;
  const double nearest = std::round(h_px / unit_px) * unit_px;
  return std::abs(h_px - nearest) > tolerance * unit_px;
}

ValidationReport validate(const Dataset& ds, const ValidationOptions& options) {
  ValidationReport report;
  auto error = [&](std::string_view code, std::string message, std::string entity) {
    report.errors.push_back({std::string(code), std::move(message), std::move(entity)});
  };
  auto warn = [&](std::string_view code, std::string message, std::string entity) {
    report.warnings.push_back({std::string(code), std::move(message), std::move(entity)});
  };

  if (!(ds.meta.unit_height_px > 0)) error(issue::kNonPositiveUnit, "unit_height_px must be positive", "meta");
  if (ds.meta.segment_width_px <= 0) {
    error(issue::kNonPositiveSegmentWidth, "segment_width_px must be positive", "meta");
  }

  std::unordered_map<SpreadId, const Spread*> spreads;
  for (const auto& spread : ds.spreads) {
    const std::string ref = entity_ref(spread.id);
    if (!spreads.emplace(spread.id, &spread).second) error(issue::kDuplicateSpreadId, "duplicate spread id", ref);
    if (spread.width_px <= 0 || spread.height_px <= 0) {
      error(issue::kNonPositivePageSize, "spread dimensions must be positive", ref);
    }
    std::set<int> lines;
    for (const auto& line : spread.lines) {
      if (!lines.insert(line.index).second) {
        error(issue::kDuplicateLineIndex, "duplicate line index " + std::to_string(line.index), ref);
      }
    }
  }
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(spreads.size()); ++i) {
    if (!spreads.contains(SpreadId{i})) {
      error(issue::kSpreadIdsNotContiguous, "spread ids must be 0.." + std::to_string(spreads.size() - 1),
            entity_ref(SpreadId{i}));
      break;
    }
  }

  auto check_key = [&](const CharacterKey& key, const std::string& ref) {
    if (key.text.empty()) error(issue::kEmptyText, "text must be non-empty", ref);
    if (key.jibo && key.jibo->empty()) error(issue::kEmptyJibo, "jibo must be absent rather than empty", ref);
  };

  std::unordered_map<BlockId, const Block*> blocks;
  for (const auto& block : ds.blocks) {
    const std::string ref = entity_ref(block.id);
    if (!blocks.emplace(block.id, &block).second) error(issue::kDuplicateBlockId, "duplicate block id", ref);
    check_key(block.key, ref);
    if (block.member_ids.empty()) error(issue::kEmptyBlock, "block has no segments", ref);
  }

  std::unordered_map<SegmentId, const Segment*> segments;
  for (const auto& seg : ds.segments) {
    const std::string ref = entity_ref(seg.id);
    if (!segments.emplace(seg.id, &seg).second) error(issue::kDuplicateSegmentId, "duplicate segment id", ref);
    check_key(seg.key, ref);

    const Spread* spread = nullptr;
    if (auto it = spreads.find(seg.spread_id); it != spreads.end()) {
      spread = it->second;
      if (!spread->has_line(seg.line_index)) {
        error(issue::kDanglingLine, "line " + std::to_string(seg.line_index) + " does not exist on " +
              entity_ref(seg.spread_id), ref);
      }
    } else {
      error(issue::kDanglingSpread, "references missing " + entity_ref(seg.spread_id), ref);
    }

    const BBox& b = seg.bbox;
    if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0) {
      error(issue::kBadBBox, "bbox needs non-negative origin and positive size", ref);
    }

    if (auto it = blocks.find(seg.block_id); it != blocks.end()) {
      if (it->second->key != seg.key) {
        error(issue::kKeyMismatch, ref + " has character " + describe(seg.key) + " but " + entity_ref(seg.block_id) +
              " has " + describe(it->second->key), ref + "," + entity_ref(seg.block_id));
      }
    } else {
      error(issue::kDanglingBlock, "references missing " + entity_ref(seg.block_id), ref);
    }

    if (b.h > 0 && height_off_unit(b.h, ds.meta.unit_height_px, options.height_tolerance)) {
      const double units = std::round(b.h / ds.meta.unit_height_px);
      warn(issue::kHeightNotUnitMultiple,
           "height " + std::to_string(b.h) + " is not near " + std::to_string(static_cast<long long>(units)) +
               " unit(s)", ref);
    }
    if (spread && (std::int64_t{b.x} + b.w > spread->width_px || std::int64_t{b.y} + b.h > spread->height_px)) {
      warn(issue::kBBoxOutOfPage, "bbox exceeds the page of " + entity_ref(seg.spread_id), ref);
    }
  }

  std::unordered_map<SegmentId, BlockId> owner;
  for (const auto& block : ds.blocks) {
    for (SegmentId sid : block.member_ids) {
      auto seg = segments.find(sid);
      if (seg == segments.end() || seg->second->block_id != block.id || !owner.emplace(sid, block.id).second) {
        error(issue::kMembershipMismatch, "member list disagrees with segment block references",
              entity_ref(block.id) + "," + entity_ref(sid));
      }
    }
  }
  for (const auto& seg : ds.segments) {
    if (blocks.contains(seg.block_id) && !owner.contains(seg.id)) {
      error(issue::kMembershipMismatch, "segment missing from its block's member list",
            entity_ref(seg.id) + "," + entity_ref(seg.block_id));
    }
  }
  return report;
}

ParsedDataset parse_dataset(std::string_view text, const ValidationOptions& options) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DatasetError(ErrorCode::SyntaxError, e.what(), "byte:" + std::to_string(e.byte));
  }
  if (!root.is_object()) schema_error("$", "top level must be an object");

  ParsedDataset out;
  Dataset& ds = out.dataset;
  const json& meta = field(root, "meta", "$");
  ds.meta.title = get_string(meta, "title", "meta");
  const json& unit = field(meta, "unit_height_px", "meta");
  if (!unit.is_number()) schema_error("meta.unit_height_px", "expected a number");
  ds.meta.unit_height_px = unit.get<double>();
  ds.meta.segment_width_px = get_int32(meta, "segment_width_px", "meta");

  const json& spreads = get_array(root, "spreads", "$");
  for (std::size_t i = 0; i < spreads.size(); ++i) {
    const std::string path = "spreads[" + std::to_string(i) + "]";
    const json& s = spreads[i];
    Spread spread;
    spread.id = SpreadId{get_int(s, "id", path)};
    spread.image = get_optional_string(s, "image", path);
    spread.width_px = get_int32(s, "width_px", path);
    spread.height_px = get_int32(s, "height_px", path);
    const json& lines = get_array(s, "lines", path);
    for (std::size_t k = 0; k < lines.size(); ++k) {
      const std::string lpath = path + ".lines[" + std::to_string(k) + "]";
      spread.lines.push_back({get_int32(lines[k], "index", lpath), get_int32(lines[k], "x_px", lpath)});
    }
    ds.spreads.push_back(std::move(spread));
  }

  const json& blocks = get_array(root, "blocks", "$");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string path = "blocks[" + std::to_string(i) + "]";
    Block block;
    block.id = BlockId{get_int(blocks[i], "id", path)};
    block.key = {get_string(blocks[i], "text", path), get_optional_string(blocks[i], "jibo", path)};
    ds.blocks.push_back(std::move(block));
  }

  const json& segments = get_array(root, "segments", "$");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::string path = "segments[" + std::to_string(i) + "]";
    const json& s = segments[i];
    Segment seg;
    seg.id = SegmentId{get_int(s, "id", path)};
    seg.spread_id = SpreadId{get_int(s, "spread", path)};
    seg.line_index = get_int32(s, "line", path);
    const json& bbox = field(s, "bbox", path);
    seg.bbox = {get_int32(bbox, "x", path + ".bbox"), get_int32(bbox, "y", path + ".bbox"),
                get_int32(bbox, "w", path + ".bbox"), get_int32(bbox, "h", path + ".bbox")};
    seg.key = {get_string(s, "text", path), get_optional_string(s, "jibo", path)};
    seg.block_id = BlockId{get_int(s, "block", path)};
    ds.segments.push_back(std::move(seg));
  }

  if (auto it = root.find("edit_log"); it != root.end() && !it->is_null()) {
    if (!it->is_array()) schema_error("edit_log", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      out.log.entries.push_back(parse_edit((*it)[i], "edit_log[" + std::to_string(i) + "]"));
    }
  }

  derive_membership(ds);
  out.report = validate(ds, options);
  if (!out.report.ok()) {
    const auto& first = out.report.errors.front();
    throw DatasetError(ErrorCode::IntegrityError, first.code + ": " + first.message, first.entity, out.report);
  }
  try {
    make_state(ds, out.log);
  } catch (const Error& e) {
    throw DatasetError(ErrorCode::IntegrityError, std::string("edit_log: ") + e.what(), e.entity(), out.report);
  }
  return out;
}

std::string export_dataset(const Dataset& input, const EditLog& log) {
  Dataset ds = input;
  canonicalize(ds);

  json root;
  root["meta"] = {{"title", ds.meta.title},
                  {"unit_height_px", ds.meta.unit_height_px},
                  {"segment_width_px", ds.meta.segment_width_px}};

  json spreads = json::array();
  for (const auto& s : ds.spreads) {
    json js;
    js["id"] = s.id.value;
    js["image"] = s.image ? json(*s.image) : json(nullptr);
    js["width_px"] = s.width_px;
    js["height_px"] = s.height_px;
    json lines = json::array();
    for (const auto& l : s.lines) lines.push_back({{"index", l.index}, {"x_px", l.x_px}});
    js["lines"] = std::move(lines);
    spreads.push_back(std::move(js));
  }
  root["spreads"] = std::move(spreads);

  json blocks = json::array();
  for (const auto& b : ds.blocks) {
    json jb;
    jb["id"] = b.id.value;
    put_key(jb, b.key);
    blocks.push_back(std::move(jb));
  }
  root["blocks"] = std::move(blocks);

  json segments = json::array();
  for (const auto& s : ds.segments) {
    json js;
    js["id"] = s.id.value;
    js["spread"] = s.spread_id.value;
    js["line"] = s.line_index;
    js["bbox"] = {{"x", s.bbox.x}, {"y", s.bbox.y}, {"w", s.bbox.w}, {"h", s.bbox.h}};
    put_key(js, s.key);
    js["block"] = s.block_id.value;
    segments.push_back(std::move(js));
  }
  root["segments"] = std::move(segments);

  json edits = json::array();
  for (const auto& e : log.entries) edits.push_back(edit_to_json(e));
  root["edit_log"] = std::move(edits);

  return root.dump(2) + "\n";
}

const std::map<std::string, ImportAdapter, std::less<>>& import_adapters() {
  static const std::map<std::string, ImportAdapter, std::less<>> adapters{
      {"canonical", [](std::string_view text) { return parse_dataset(text); }},
  };
  return adapters;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadRequest, "cannot open " + path, path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::BadRequest, "cannot write " + path, path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace typecase
