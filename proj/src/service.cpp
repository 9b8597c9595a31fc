#include "typecase/service.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "typecase/analytics.hpp"
#include "typecase/io.hpp"

namespace typecase {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad_request(const std::string& what) { throw Error(ErrorCode::BadRequest, what); }

std::int64_t parse_int(std::string_view text, const std::string& what) {
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) bad_request(what + " must be an integer");
  return v;
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  bad_request(what + " must be a number");
}

std::optional<std::string> query(const ApiRequest& r, const std::string& name) {
  auto it = r.query.find(name);
  if (it == r.query.end()) return std::nullopt;
  return it->second;
}

json key_json(const CharacterKey& key) {
  json j;
  j["text"] = key.text;
  if (key.jibo) j["jibo"] = *key.jibo;
  return j;
}

CharacterKey key_from_json(const json& j) {
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) bad_request("character needs a text string");
  CharacterKey key{j["text"].get<std::string>(), std::nullopt};
  if (j.contains("jibo") && !j["jibo"].is_null()) {
    if (!j["jibo"].is_string()) bad_request("jibo must be a string");
    key.jibo = j["jibo"].get<std::string>();
  }
  return key;
}

json bbox_json(const BBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

json segment_json(const Segment& s) {
  json j;
  j["id"] = s.id.value;
  j["spread"] = s.spread_id.value;
  j["line"] = s.line_index;
  j["bbox"] = bbox_json(s.bbox);
  j["text"] = s.key.text;
  if (s.key.jibo) j["jibo"] = *s.key.jibo;
  j["block"] = s.block_id.value;
  return j;
}

template <class Ids>
json id_array(const Ids& ids) {
  json a = json::array();
  for (const auto& id : ids) a.push_back(id.value);
  return a;
}

ApiResponse json_response(const Snapshot& snap, json payload, int status = 200) {
  json body;
  body["revision"] = snap.revision();
  for (auto& [k, v] : payload.items()) body[k] = std::move(v);
  return {status, "application/json", body.dump() + "\n", snap.revision()};
}

ApiResponse png_response(const Snapshot& snap, const GrayRaster& img) {
  return {200, "image/png", PngCodec().encode(img), snap.revision()};
}

ApiResponse error_response(const Error& e, std::int64_t revision) {
  json body;
  body["revision"] = revision;
  body["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"entity", e.entity()}};
  return {http_status(e.code()), "application/json", body.dump() + "\n", revision};
}

ApiResponse routing_error(int status, const std::string& code, const std::string& message, std::int64_t revision) {
  json body;
  body["revision"] = revision;
  body["error"] = {{"code", code}, {"message", message}, {"entity", ""}};
  return {status, "application/json", body.dump() + "\n", revision};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

std::string cache_key(const ApiRequest& r) {
  std::string key = r.method + " " + r.path;
  for (const auto& [k, v] : r.query) key += "&" + k + "=" + v;
  return key;
}

json parse_body(const ApiRequest& r) {
  if (r.body.empty()) return json::object();
  try {
    json j = json::parse(r.body);
    if (!j.is_object()) bad_request("request body must be an object");
    return j;
  } catch (const json::parse_error& e) {
    bad_request(std::string("malformed request body: ") + e.what());
  }
}

std::int64_t body_int(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end() || !it->is_number_integer()) bad_request(std::string("field '") + name + "' must be an integer");
  return it->get<std::int64_t>();
}

std::int64_t min_shared_param(const ApiRequest& r) {
  const auto v = query(r, "min_shared");
  const std::int64_t k = v ? parse_int(*v, "min_shared") : 1;
  if (k < 1) bad_request("min_shared must be at least 1");
  return k;
}

BlockFilter reuse_filter(const ApiRequest& r) {
  const auto v = query(r, "min_reuse");
  if (!v) return {};
  const std::int64_t min_reuse = parse_int(*v, "min_reuse");
  return [min_reuse](const Block& b) { return static_cast<std::int64_t>(b.member_ids.size()) >= min_reuse; };
}

json selection_json(const Selection& sel, const IndexedDataset& ds) {
  json chars = json::array(), touched = json::array(), fanout = json::array();
  for (const auto& k : sel.whole_characters) chars.push_back(key_json(k));
  for (const auto& k : sel.characters) {
    touched.push_back(key_json(k));
    json f = key_json(k);
    f["blocks"] = id_array(ds.blocks_of(k));
    fanout.push_back(std::move(f));
  }
  json j;
  j["characters"] = std::move(chars);
  j["touched_characters"] = std::move(touched);
  j["blocks"] = id_array(sel.blocks);
  j["segments"] = id_array(sel.segments);
  j["character_fanout"] = std::move(fanout);
  return j;
}

Selection selection_from_json(const json& body) {
  Selection sel;
  auto each = [&](const char* name, auto&& f) {
    if (!body.contains(name)) return;
    const json& a = body[name];
    if (!a.is_array()) bad_request(std::string("field '") + name + "' must be an array");
    for (const auto& v : a) f(v);
  };
  each("characters", [&](const json& v) { sel.whole_characters.insert(key_from_json(v)); });
  each("touched_characters", [&](const json& v) { sel.characters.insert(key_from_json(v)); });
  each("blocks", [&](const json& v) {
    if (!v.is_number_integer()) bad_request("block ids must be integers");
    sel.blocks.insert(BlockId{v.get<std::int64_t>()});
  });
  each("segments", [&](const json& v) {
    if (!v.is_number_integer()) bad_request("segment ids must be integers");
    sel.segments.insert(SegmentId{v.get<std::int64_t>()});
  });
  return sel;
}

std::optional<int> threshold_param(const std::optional<std::string>& v) {
  if (!v || *v == "otsu" || *v == "true" || v->empty()) return std::nullopt;
  const std::int64_t t = parse_int(*v, "threshold");
  if (t < -1 || t > 255) bad_request("threshold must lie in -1..255");
  return static_cast<int>(t);
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownId:
    case ErrorCode::UnknownCharacter:
    case ErrorCode::UnknownSpread:
    case ErrorCode::MissingImage:
      return 404;
    case ErrorCode::SingletonBlock:
    case ErrorCode::EmptyLog:
      return 409;
    case ErrorCode::RevisionConflict:
      return 412;
    case ErrorCode::KeyMismatch:
    case ErrorCode::SameBlock:
    case ErrorCode::InsufficientData:
    case ErrorCode::TooFewNodes:
    case ErrorCode::EmptyGraph:
    case ErrorCode::TooFewBlocks:
    case ErrorCode::EmptyIntersection:
    case ErrorCode::ConstantImage:
    case ErrorCode::IntegrityError:
    case ErrorCode::InfeasibleConfig:
      return 422;
    case ErrorCode::SyntaxError:
    case ErrorCode::SchemaError:
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::IndexConflict:
    case ErrorCode::NoConvergence:
      return 500;
  }
  return 500;
}

Service::Service(CurationState state, std::shared_ptr<const PageSource> images, Curator::Clock clock)
    : curator_(std::move(state), std::move(clock)), images_(std::move(images)) {}

CacheStats Service::cache_stats() const {
  std::lock_guard lock(cache_mutex_);
  return {hits_, misses_, cache_.size()};
}

ApiResponse Service::handle(const ApiRequest& request) {
  const auto snap = curator_.snapshot();
  try {
    return route(request, snap);
  } catch (const Error& e) {
    return error_response(e, curator_.snapshot()->revision());
  } catch (const json::exception& e) {
    return error_response(Error(ErrorCode::BadRequest, e.what()), curator_.snapshot()->revision());
  }
}

ApiResponse Service::cached(const Snapshot& snap, const ApiRequest& request, Scope scope, const std::string& tag,
                            const std::function<ApiResponse()>& compute) {
  const std::string key = cache_key(request);
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end() && it->second.serial == snap.serial) {
      ++hits_;
      ApiResponse out = it->second.response;
      return out;
    }
    ++misses_;
  }
  ApiResponse out = compute();
  if (out.status == 200) {
    std::lock_guard lock(cache_mutex_);
    auto& slot = cache_[key];
    if (slot.serial <= snap.serial) slot = {snap.serial, scope, tag, out};
  }
  return out;
}

void Service::advance_cache(std::uint64_t from_serial, std::uint64_t to_serial, const EditOutcome& outcome) {
  std::set<std::string> characters, blocks;
  for (const auto& k : outcome.affected_characters) characters.insert(describe(k));
  for (const auto& c : outcome.changes) blocks.insert(std::to_string(c.id.value));
  const std::int64_t revision = outcome.snapshot->revision();

  std::lock_guard lock(cache_mutex_);
  for (auto it = cache_.begin(); it != cache_.end();) {
    CacheEntry& e = it->second;
    bool keep = e.serial == from_serial;
    if (keep) {
      switch (e.scope) {
        case Scope::Static: break;
        case Scope::Global: keep = false; break;
        case Scope::Character: keep = !characters.contains(e.tag); break;
        case Scope::Block: keep = !blocks.contains(e.tag); break;
      }
    }
    if (e.serial == to_serial) keep = true;  // computed against the new snapshot already
    if (!keep) {
      it = cache_.erase(it);
      continue;
    }
    if (e.serial == from_serial) {
      e.serial = to_serial;
      e.response.revision = revision;
      if (e.response.content_type == "application/json") {
        json body = json::parse(e.response.body);
        body["revision"] = revision;
        e.response.body = body.dump() + "\n";
      }
    }
    ++it;
  }
}

ApiResponse Service::edit(const ApiRequest& request) {
  const json body = parse_body(request);
  std::optional<std::int64_t> expected;
  if (auto it = body.find("expected_revision"); it != body.end() && !it->is_null()) {
    if (!it->is_number_integer()) bad_request("expected_revision must be an integer");
    expected = it->get<std::int64_t>();
  }

  std::lock_guard lock(edit_mutex_);
  const auto before = curator_.snapshot();
  EditOutcome out;
  if (request.path == "/api/edits/undo") {
    out = curator_.undo(expected);
  } else {
    if (!expected) bad_request("edits require expected_revision");
    auto op = body.find("op");
    if (op == body.end() || !op->is_string()) bad_request("field 'op' must be one of move, merge, detach");
    const std::string name = op->get<std::string>();
    if (name == "move") {
      out = curator_.move_segment(SegmentId{body_int(body, "segment")}, BlockId{body_int(body, "to")}, expected);
    } else if (name == "merge") {
      out = curator_.merge_blocks(BlockId{body_int(body, "src")}, BlockId{body_int(body, "dst")}, expected);
    } else if (name == "detach") {
      out = curator_.detach_segment(SegmentId{body_int(body, "segment")}, expected);
    } else {
      bad_request("unknown edit op '" + name + "'");
    }
  }
  if (!out.changes.empty()) advance_cache(before->serial, out.snapshot->serial, out);

  json payload;
  json ids = json::array(), changed = json::array(), keys = json::array();
  for (const auto& c : out.changes) {
    ids.push_back(c.id.value);
    changed.push_back({{"id", c.id.value}, {"created", c.created}, {"deleted", c.deleted}});
  }
  for (const auto& k : out.affected_characters) keys.push_back(key_json(k));
  payload["changed_block_ids"] = std::move(ids);
  payload["changed_blocks"] = std::move(changed);
  payload["affected_characters"] = std::move(keys);
  return json_response(*out.snapshot, std::move(payload));
}

ApiResponse Service::route(const ApiRequest& req, const std::shared_ptr<const Snapshot>& snap_ptr) {
  const Snapshot& snap = *snap_ptr;
  const IndexedDataset& ds = snap.indexed;
  const auto parts = split_path(req.path);
  const std::int64_t rev = snap.revision();
  if (parts.size() < 2 || parts[0] != "api") return routing_error(404, "UnknownEndpoint", "no such endpoint", rev);
  const std::string& head = parts[1];
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  auto wrong_method = [&] { return routing_error(405, "MethodNotAllowed", req.method + " not allowed here", rev); };

  if (head == "edits") {
    if (parts.size() == 2 && get) {
      return cached(snap, req, Scope::Global, "", [&] {
        json exported = json::parse(export_dataset(snap.state.dataset, snap.state.log));
        return json_response(snap, {{"edit_log", std::move(exported["edit_log"])}});
      });
    }
    if (!post) return wrong_method();
    if (parts.size() == 2 || (parts.size() == 3 && parts[2] == "undo")) return edit(req);
    return routing_error(404, "UnknownEndpoint", "no such endpoint", rev);
  }

  if (head == "selection" && parts.size() == 3 && parts[2] == "expand") {
    if (!post) return wrong_method();
    const Selection expanded = expand_selection(selection_from_json(parse_body(req)), ds);
    return json_response(snap, {{"selection", selection_json(expanded, ds)}});
  }

  if (head == "analytics" && parts.size() == 3 && parts[2] == "modularity") {
    if (!post) return wrong_method();
    const json body = parse_body(req);
    auto it = body.find("groups");
    if (it == body.end() || !it->is_array()) bad_request("field 'groups' must be an array of integers");
    std::vector<int> groups;
    for (const auto& g : *it) {
      if (!g.is_number_integer()) bad_request("groups must be integers");
      groups.push_back(g.get<int>());
    }
    std::int64_t min_shared = 1;
    if (body.contains("min_shared")) min_shared = body_int(body, "min_shared");
    if (min_shared < 1) bad_request("min_shared must be at least 1");
    const auto g = spread_graph(ds, min_shared);
    return json_response(snap, {{"modularity", partition_modularity(g, groups)}, {"min_shared", min_shared}});
  }

  if (!get) return wrong_method();

  if (head == "summary" && parts.size() == 2) {
    return cached(snap, req, Scope::Global, "", [&] {
      const auto s = summary(ds);
      return json_response(snap, {{"summary",
                                   {{"n_spreads", s.n_spreads},
                                    {"n_segments", s.n_segments},
                                    {"n_blocks", s.n_blocks},
                                    {"n_characters", s.n_characters},
                                    {"unit_height_px", s.unit_height_px},
                                    {"modal_segment_width_px", s.modal_segment_width_px},
                                    {"title", ds.meta().title}}}});
    });
  }

  if (head == "spreads" && parts.size() == 2) {
    return cached(snap, req, Scope::Static, "", [&] {
      json spreads = json::array();
      for (const auto& s : ds.spreads()) {
        spreads.push_back({{"id", s.id.value},
                           {"image", s.image ? json(*s.image) : json(nullptr)},
                           {"width_px", s.width_px},
                           {"height_px", s.height_px},
                           {"n_segments", ds.segments_on(s.id).size()}});
      }
      return json_response(snap, {{"spreads", std::move(spreads)}});
    });
  }

  if (head == "spreads" && parts.size() == 3) {
    const SpreadId id{parse_int(parts[2], "spread id")};
    return cached(snap, req, Scope::Global, "", [&] {
      const Spread& s = ds.spread(id);
      json lines = json::array(), segments = json::array();
      for (const auto& l : s.lines) lines.push_back({{"index", l.index}, {"x_px", l.x_px}});
      for (SegmentId sid : ds.segments_on(id)) segments.push_back(segment_json(ds.segment(sid)));
      json spread;
      spread["id"] = s.id.value;
      spread["image"] = s.image ? json(*s.image) : json(nullptr);
      spread["width_px"] = s.width_px;
      spread["height_px"] = s.height_px;
      spread["lines"] = std::move(lines);
      spread["segments"] = std::move(segments);
      return json_response(snap, {{"spread", std::move(spread)}});
    });
  }

  if (head == "segments" && parts.size() == 3) {
    const SegmentId id{parse_int(parts[2], "segment id")};
    const Segment& s = ds.segment(id);
    return cached(snap, req, Scope::Character, describe(s.key), [&] {
      return json_response(snap, {{"segment", segment_json(s)}});
    });
  }

  if (head == "blocks" && parts.size() == 3) {
    const BlockId id{parse_int(parts[2], "block id")};
    const Block& b = ds.block(id);
    return cached(snap, req, Scope::Block, std::to_string(id.value), [&] {
      json block = key_json(b.key);
      block["id"] = b.id.value;
      block["members"] = id_array(b.member_ids);
      block["reuse"] = b.member_ids.size();
      block["spreads"] = id_array(ds.spreads_of(id));
      block["representative"] = representative_segment(ds, id, images_.get()).value;
      json out;
      out["block"] = std::move(block);
      return json_response(snap, std::move(out));
    });
  }

  if (head == "characters" && parts.size() == 2) {
    return cached(snap, req, Scope::Global, "", [&] {
      json chars = json::array();
      for (const auto& [key, blocks] : ds.characters()) {
        std::size_t uses = 0;
        for (BlockId b : blocks) uses += ds.members(b).size();
        json c = key_json(key);
        c["blocks"] = id_array(blocks);
        c["segments"] = uses;
        chars.push_back(std::move(c));
      }
      return json_response(snap, {{"characters", std::move(chars)}});
    });
  }

  if (head == "characters" && parts.size() == 3 && parts[2] == "timeline") {
    const auto text = query(req, "text");
    if (!text || text->empty()) bad_request("query parameter 'text' is required");
    CharacterKey key{*text, std::nullopt};
    if (auto jibo = query(req, "jibo"); jibo && !jibo->empty()) key.jibo = *jibo;
    return cached(snap, req, Scope::Character, describe(key), [&] {
      const Timeline t = character_timeline(ds, key);
      json rows = json::array();
      for (const auto& r : t.rows) rows.push_back({{"block", r.block.value}, {"counts", r.counts}});
      json timeline = key_json(t.key);
      timeline["n_spreads"] = ds.spreads().size();
      timeline["rows"] = std::move(rows);
      return json_response(snap, {{"timeline", std::move(timeline)}});
    });
  }

  if (head == "export" && parts.size() == 2) {
    return cached(snap, req, Scope::Global, "", [&] {
      return ApiResponse{200, "application/json", export_dataset(snap.state.dataset, snap.state.log), rev};
    });
  }

  if (head == "images" && parts.size() == 4) {
    const std::int64_t raw_id = parse_int(parts[3], "id");
    auto page_of = [&](const Spread& spread) {
      auto page = images_ ? images_->page(spread) : nullptr;
      if (!page) throw Error(ErrorCode::MissingImage, "no page image for " + entity_ref(spread.id), entity_ref(spread.id));
      return page;
    };
    if (parts[2] == "page") {
      const Spread& spread = ds.spread(SpreadId{raw_id});
      return cached(snap, req, Scope::Static, "", [&] { return png_response(snap, *page_of(spread)); });
    }
    if (parts[2] == "segment") {
      const Segment& seg = ds.segment(SegmentId{raw_id});
      const auto mode = query(req, "binarize");
      const bool binary = mode && *mode != "false" && *mode != "0";
      const auto threshold = binary ? threshold_param(mode) : std::nullopt;
      return cached(snap, req, Scope::Static, "", [&] {
        GrayRaster crop = crop_segment(*page_of(ds.spread(seg.spread_id)), seg.bbox);
        if (binary) crop = binarize(crop, threshold ? *threshold : otsu_threshold(crop));
        return png_response(snap, crop);
      });
    }
    if (parts[2] == "block") {
      const BlockId id{raw_id};
      ds.block(id);
      const auto threshold = threshold_param(query(req, "threshold"));
      return cached(snap, req, Scope::Block, std::to_string(id.value), [&] {
        if (!images_) throw Error(ErrorCode::MissingImage, "no page images loaded", entity_ref(id));
        return png_response(snap, block_thumbnail(ds, id, *images_, threshold));
      });
    }
  }

  if (head == "analytics" && parts.size() == 3) {
    const std::string& what = parts[2];
    if (what == "reuse") {
      return cached(snap, req, Scope::Global, "", [&] {
        json reuse = json::array();
        std::map<std::size_t, std::size_t> histogram;
        for (const auto& [b, n] : reuse_counts(ds)) {
          reuse.push_back({{"block", b.value}, {"count", n}});
          ++histogram[n];
        }
        json hist = json::array();
        for (const auto& [n, blocks] : histogram) hist.push_back({{"count", n}, {"blocks", blocks}});
        return json_response(snap, {{"reuse", std::move(reuse)}, {"histogram", std::move(hist)}});
      });
    }
    if (what == "zipf") {
      return cached(snap, req, Scope::Global, "", [&] {
        std::vector<std::size_t> counts;
        for (const auto& [b, n] : reuse_counts(ds)) counts.push_back(n);
        const auto fit = zipf_fit(counts);
        return json_response(snap, {{"exponent", fit.exponent}, {"r2", fit.r2}, {"n_blocks", counts.size()}});
      });
    }
    if (what == "duplicates") {
      return cached(snap, req, Scope::Global, "", [&] {
        json hits = json::array();
        for (const auto& d : same_spread_duplicates(ds)) {
          hits.push_back({{"block", d.block.value}, {"spread", d.spread.value}, {"count", d.count}});
        }
        return json_response(snap, {{"duplicates", std::move(hits)}});
      });
    }
    if (what == "anomalies") {
      AnomalyOptions options;
      if (auto k = query(req, "k")) options.k = parse_double(*k, "k");
      return cached(snap, req, Scope::Static, "", [&] {
        json list = json::array();
        for (const auto& a : bbox_anomalies(ds, options)) {
          list.push_back({{"segment", a.segment.value},
                          {"spread", ds.segment(a.segment).spread_id.value},
                          {"score", a.score},
                          {"area_outlier", a.area_outlier},
                          {"height_off_unit", a.height_off_unit}});
        }
        return json_response(snap, {{"k", options.k}, {"anomalies", std::move(list)}});
      });
    }
    if (what == "coappearance") {
      const auto filter = reuse_filter(req);
      return cached(snap, req, Scope::Global, "", [&] {
        const auto m = co_appearance(ds, filter);
        json triplets = json::array();
        for (std::size_t i = 0; i < m.size(); ++i) {
          for (std::size_t j = 0; j < m.size(); ++j) {
            if (m.at(i, j) != 0) triplets.push_back({m.block_ids[i].value, m.block_ids[j].value, m.at(i, j)});
          }
        }
        return json_response(snap, {{"block_ids", id_array(m.block_ids)}, {"triplets", std::move(triplets)}});
      });
    }
    if (what == "graph" || what == "density") {
      const std::int64_t min_shared = min_shared_param(req);
      return cached(snap, req, Scope::Global, "", [&] {
        const auto g = spread_graph(ds, min_shared);
        json out;
        out["n_spreads"] = g.n_spreads;
        out["min_shared"] = min_shared;
        if (what == "graph") {
          json edges = json::array();
          for (const auto& e : g.edges) edges.push_back({{"u", e.u.value}, {"v", e.v.value}, {"weight", e.weight}});
          out["edges"] = std::move(edges);
        }
        out["density"] = g.n_spreads >= 2 ? json(graph_density(g)) : json(nullptr);
        return json_response(snap, std::move(out));
      });
    }
    if (what == "embedding") {
      const auto filter = reuse_filter(req);
      EmbeddingOptions options;
      if (auto d = query(req, "dims")) {
        const std::int64_t dims = parse_int(*d, "dims");
        if (dims < 1 || dims > 10) bad_request("dims must lie in 1..10");
        options.dims = static_cast<std::size_t>(dims);
      }
      return cached(snap, req, Scope::Global, "", [&] {
        const auto e = block_embedding(co_appearance(ds, filter), options);
        json points = json::array();
        for (std::size_t i = 0; i < e.block_ids.size(); ++i) {
          points.push_back({{"block", e.block_ids[i].value}, {"coords", e.coords[i]}});
        }
        return json_response(snap, {{"eigenvalues", e.eigenvalues}, {"iterations", e.iterations}, {"points", std::move(points)}});
      });
    }
    if (what == "rhythm") {
      const auto s = query(req, "spread");
      if (!s) bad_request("query parameter 'spread' is required");
      const SpreadId id{parse_int(*s, "spread")};
      return cached(snap, req, Scope::Static, "", [&] {
        json lines = json::array();
        for (const auto& l : line_rhythm(ds, id)) lines.push_back({{"index", l.line_index}, {"units", l.units}});
        return json_response(snap, {{"spread", id.value}, {"lines", std::move(lines)}});
      });
    }
  }

  return routing_error(404, "UnknownEndpoint", "no such endpoint: " + req.path, rev);
}

HttpServer::HttpServer(Service& service, ServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest api;
    api.method = req.method;
    api.path = req.path;
    for (const auto& [k, v] : req.params) api.query.emplace(k, v);
    api.body = req.body;
    const ApiResponse out = service_.handle(api);
    res.status = out.status;
    res.set_header("X-Typecase-Revision", std::to_string(out.revision));
    res.set_header("Cache-Control", "no-cache");
    res.set_content(out.body, out.content_type);
  };
  server_->Get(R"(/api/.*)", forward);
  server_->Post(R"(/api/.*)", forward);
  server_->Put(R"(/api/.*)", forward);
  server_->Delete(R"(/api/.*)", forward);
  if (options_.ui_dir) server_->set_mount_point("/", options_.ui_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error(ErrorCode::BadRequest, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start_background() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace typecase
