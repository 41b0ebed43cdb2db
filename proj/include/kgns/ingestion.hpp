#pragma once

// Tabular sources to facts, plus ontology refinement: relation merging,
// sign merging by handshape + gloss edit distance, English pruning and cleaning.

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgns/common.hpp"
#include "kgns/kg_store.hpp"

namespace kgns {

// ---------------------------------------------------------------------------
// Edit distance

namespace detail {

inline std::vector<char32_t> code_points(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 1;
    if (i + len > s.size()) len = 1;
    char32_t cp = len == 1 ? c : (c & (0xff >> (len + 1)));
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
    out.push_back(cp);
    i += len;
  }
  return out;
}

}  // namespace detail

/// Unit-cost insert/delete/substitute distance over UTF-8 code points.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  auto x = detail::code_points(a), y = detail::code_points(b);
  if (x.size() < y.size()) std::swap(x, y);
  std::vector<std::size_t> row(y.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (x[i - 1] == y[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[y.size()];
}

/// True when levenshtein(a, b) <= 1, without filling the full table.
inline bool within_one_edit(std::string_view a, std::string_view b) {
  auto diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
  if (diff > 4) return false;  // code points are at most 4 bytes
  return levenshtein(a, b) <= 1;
}

/// Lowercased gloss with a trailing variant id ("right_2" -> "right") removed.
inline std::string gloss_key(std::string_view gloss) {
  std::string g = to_lower(trim(gloss));
  auto us = g.find_last_of('_');
  if (us != std::string::npos && us + 1 < g.size() && us > 0 &&
      std::all_of(g.begin() + static_cast<std::ptrdiff_t>(us) + 1, g.end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    g.erase(us);
  return g;
}

// ---------------------------------------------------------------------------
// Source tables

struct ColumnSpec {
  std::string name;
  RelType rel_type = RelType::meta;
  std::optional<Namespace> tail_namespace;  // inferred from rel_type when absent
  bool numeric = false;
};

struct SourceTable {
  std::string name;
  std::vector<ColumnSpec> columns;
  std::vector<std::vector<std::string>> rows;
  std::size_t subject_column = 0;
  Namespace subject_namespace = Namespace::asl;
};

struct IngestResult {
  std::vector<Fact> facts;
  std::vector<std::string> diagnostics;
  std::size_t rows_skipped = 0;
};

inline Namespace default_tail_namespace(RelType t) {
  switch (t) {
    case RelType::phonological:
    case RelType::phonetic: return Namespace::phoneme;
    case RelType::semantic:
    case RelType::systematicity: return Namespace::semfeat;
    case RelType::morphological: return Namespace::asl;
    default: return Namespace::en;
  }
}

/// One fact per non-empty, non-subject cell; a row with an unparseable numeric cell is skipped whole.
inline IngestResult rows_to_facts(const SourceTable& table) {
  require(table.subject_column < table.columns.size(), "table '", table.name, "': subject column ",
          table.subject_column, " out of range");
  IngestResult out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    require(row.size() == table.columns.size(), "table '", table.name, "' row ", r + 1, " has ", row.size(),
            " cells, expected ", table.columns.size());
    auto subject = std::string(trim(row[table.subject_column]));
    require(!subject.empty(), "table '", table.name, "' row ", r + 1, " has an empty subject cell");
    EntityId head(table.subject_namespace, subject);

    std::vector<Fact> row_facts;
    bool skip = false;
    for (std::size_t c = 0; c < row.size() && !skip; ++c) {
      if (c == table.subject_column) continue;
      auto cell = std::string(trim(row[c]));
      if (cell.empty()) continue;
      const auto& col = table.columns[c];
      RelationId rel(col.name, col.rel_type);
      auto number = parse_number(cell);
      bool as_literal = col.numeric || col.tail_namespace == Namespace::literal ||
                        (!col.tail_namespace && number && allows_literal_tail(col.rel_type));
      if (as_literal && !number) {
        out.diagnostics.push_back("table '" + table.name + "' row " + std::to_string(r + 1) + ": column '" +
                                  col.name + "' value '" + cell + "' is not numeric; row skipped");
        skip = true;
        break;
      }
      EntityId tail = as_literal ? EntityId::literal(cell)
                                 : EntityId(col.tail_namespace.value_or(default_tail_namespace(col.rel_type)), cell);
      row_facts.push_back(Fact{head, rel, tail, table.name});
    }
    if (skip) {
      ++out.rows_skipped;
      continue;
    }
    out.facts.insert(out.facts.end(), row_facts.begin(), row_facts.end());
  }
  return out;
}

/// RFC 4180 CSV: quoted fields may contain commas, newlines and doubled quotes.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char c;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field");
  if (any && (!field.empty() || !row.empty())) end_row();
  return rows;
}

// ---------------------------------------------------------------------------
// Manifest

struct TableSource {
  std::string name;
  std::string path;
  std::string subject_column;
  Namespace subject_namespace = Namespace::asl;
  std::vector<ColumnSpec> columns;
};

struct RefinementConfig {
  std::map<std::string, std::string> relation_renames;
  std::map<std::string, std::string> handshape_renames;  // phoneme label -> canonical label
  std::string handshape_relation = "handshape";
  std::string translation_relation = "has_translation";
};

struct Manifest {
  std::vector<TableSource> tables;
  RefinementConfig refinement;
};

inline Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  Manifest m;
  try {
    for (auto& t : j.at("tables")) {
      TableSource src;
      src.name = t.at("name").get<std::string>();
      auto p = std::filesystem::path(t.at("path").get<std::string>());
      src.path = (p.is_absolute() || base.empty() ? p : base / p).string();
      src.subject_column = t.at("subject_column").get<std::string>();
      if (t.contains("subject_namespace")) {
        auto ns = parse_namespace(t["subject_namespace"].get<std::string>());
        require(ns.has_value(), "table '", src.name, "': unknown subject_namespace");
        src.subject_namespace = *ns;
      }
      for (auto& c : t.at("columns")) {
        ColumnSpec col;
        col.name = c.at("name").get<std::string>();
        col.rel_type = parse_rel_type(c.at("rel_type").get<std::string>());
        if (c.contains("tail")) {
          auto ns = parse_namespace(c["tail"].get<std::string>());
          require(ns.has_value(), "column '", col.name, "': unknown tail namespace");
          col.tail_namespace = *ns;
        }
        col.numeric = c.value("numeric", false);
        src.columns.push_back(col);
      }
      m.tables.push_back(std::move(src));
    }
    if (j.contains("relation_renames"))
      m.refinement.relation_renames = j["relation_renames"].get<std::map<std::string, std::string>>();
    if (j.contains("handshape_renames"))
      m.refinement.handshape_renames = j["handshape_renames"].get<std::map<std::string, std::string>>();
    if (j.contains("handshape_relation"))
      m.refinement.handshape_relation = j["handshape_relation"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + path + "': " + e.what());
  }
  return parse_manifest(j, std::filesystem::path(path).parent_path());
}

/// Reads a CSV with a header row and keeps the subject column plus the declared columns.
inline SourceTable load_table(const TableSource& src) {
  std::ifstream in(src.path);
  if (!in) throw Error("cannot open table '" + src.name + "' at '" + src.path + "'");
  auto rows = parse_csv(in);
  if (rows.empty()) throw ParseError("table '" + src.name + "' at '" + src.path + "' has no header row");
  const auto& header = rows.front();
  auto find = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return i;
    throw ParseError("table '" + src.name + "': column '" + name + "' not in header of '" + src.path + "'");
  };
  std::vector<std::size_t> picks{find(src.subject_column)};
  SourceTable table;
  table.name = src.name;
  table.subject_namespace = src.subject_namespace;
  table.columns.push_back(ColumnSpec{src.subject_column, RelType::meta, src.subject_namespace, false});
  for (auto& c : src.columns) {
    picks.push_back(find(c.name));
    table.columns.push_back(c);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::vector<std::string> cells;
    for (auto i : picks) cells.push_back(i < rows[r].size() ? rows[r][i] : std::string{});
    if (trim(cells[0]).empty()) continue;
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Refinement

struct SignEvidence {
  EntityId id;
  std::string gloss;
  std::optional<std::string> handshape;
};

struct EqualityVerdict {
  bool equal = false;
  bool no_evidence = false;  // a handshape was missing, so merging is unsupported
  explicit operator bool() const noexcept { return equal; }
};

/// Two signs are the same lexical item iff their handshapes agree and their glosses are within one edit.
inline EqualityVerdict entity_equal(const SignEvidence& a, const SignEvidence& b) {
  if (!a.handshape || !b.handshape) return {false, true};
  if (*a.handshape != *b.handshape) return {false, false};
  return {within_one_edit(gloss_key(a.gloss), gloss_key(b.gloss)), false};
}

/// Gloss is the entity label; the handshape is the sorted set of its handshape tails.
inline SignEvidence sign_evidence(const KnowledgeGraph& g, const EntityId& sign,
                                  const std::string& handshape_relation) {
  SignEvidence ev{sign, sign.label(), std::nullopt};
  std::set<std::string> hs;
  for (auto& t : g.objects(sign, handshape_relation)) hs.insert(t.label());
  if (!hs.empty()) ev.handshape = join(std::vector<std::string>(hs.begin(), hs.end()), "|");
  return ev;
}

struct MergePlan {
  std::map<std::string, std::string> relation_renames;
  std::map<std::string, std::string> phoneme_renames;
  std::set<std::pair<EntityId, EntityId>> entity_merges;
};

struct RefinementReport {
  MergePlan plan;
  std::map<EntityId, EntityId> merged_into;  // non-canonical sign -> canonical sign
  std::vector<EntityId> removed_english;
  std::vector<std::string> conflicts;
  std::size_t nan_dropped = 0;
  std::size_t literals_normalized = 0;
  std::size_t facts_before = 0, facts_after = 0;
  std::size_t entities_before = 0, entities_after = 0;

  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    out.push_back("facts_before\t" + std::to_string(facts_before));
    out.push_back("facts_after\t" + std::to_string(facts_after));
    out.push_back("entities_before\t" + std::to_string(entities_before));
    out.push_back("entities_after\t" + std::to_string(entities_after));
    for (auto& [from, to] : plan.relation_renames) out.push_back("rename_relation\t" + from + "\t" + to);
    for (auto& [from, to] : plan.phoneme_renames) out.push_back("rename_phoneme\t" + from + "\t" + to);
    for (auto& [from, to] : merged_into) out.push_back("merge_sign\t" + from.str() + "\t" + to.str());
    for (auto& e : removed_english) out.push_back("remove_english\t" + e.str());
    out.push_back("nan_dropped\t" + std::to_string(nan_dropped));
    out.push_back("literals_normalized\t" + std::to_string(literals_normalized));
    for (auto& c : conflicts) out.push_back("conflict\t" + c);
    return out;
  }
};

/// Follows rename chains to their end; a cycle is rejected.
inline std::map<std::string, std::string> resolve_renames(const std::map<std::string, std::string>& renames) {
  std::map<std::string, std::string> out;
  for (auto& [from, _] : renames) {
    std::string cur = from;
    std::set<std::string> seen{cur};
    for (auto it = renames.find(cur); it != renames.end() && it->second != cur; it = renames.find(cur)) {
      cur = it->second;
      if (!seen.insert(cur).second) throw PreconditionError("rename cycle through '" + from + "'");
    }
    if (cur != from) out[from] = cur;
  }
  return out;
}

/// Renames every translation-typed relation to the shared translation relation, applies explicit
/// relation renames, and unifies handshape spellings through `handshape_renames`.
inline KnowledgeGraph merge_relations(const KnowledgeGraph& g, const RefinementConfig& cfg,
                                      MergePlan* plan_out = nullptr) {
  std::map<std::string, std::string> explicit_renames;
  for (auto& [a, b] : cfg.relation_renames) explicit_renames[normalize_relation_name(a)] = normalize_relation_name(b);
  auto relation_renames = resolve_renames(explicit_renames);
  auto phoneme_renames = resolve_renames(cfg.handshape_renames);
  auto translation = normalize_relation_name(cfg.translation_relation);
  for (auto& r : g.relations())
    if (r.type == RelType::translation && r.name != translation && !relation_renames.count(r.name))
      relation_renames[r.name] = translation;

  MergePlan plan;
  for (auto& r : g.relations())
    if (auto it = relation_renames.find(r.name); it != relation_renames.end()) plan.relation_renames[r.name] = it->second;
  for (auto& e : g.entities())
    if (e.ns() == Namespace::phoneme)
      if (auto it = phoneme_renames.find(e.label()); it != phoneme_renames.end())
        plan.phoneme_renames[e.label()] = it->second;

  auto out = g.rebuild([](const Fact&) { return true; },
                       [&](Fact f) {
                         if (auto it = plan.relation_renames.find(f.relation.name); it != plan.relation_renames.end())
                           f.relation = RelationId(it->second, f.relation.type);
                         auto rename = [&](EntityId& e) {
                           if (e.ns() != Namespace::phoneme) return;
                           if (auto it = plan.phoneme_renames.find(e.label()); it != plan.phoneme_renames.end())
                             e = EntityId(Namespace::phoneme, it->second);
                         };
                         rename(f.head);
                         rename(f.tail);
                         return f;
                       });
  if (plan_out) *plan_out = std::move(plan);
  return out;
}

/// Pairs of asl signs satisfying entity_equal. Candidates are bucketed by handshape first.
inline std::set<std::pair<EntityId, EntityId>> plan_sign_merges(const KnowledgeGraph& g,
                                                                const std::string& handshape_relation) {
  std::map<std::string, std::vector<SignEvidence>> by_handshape;
  for (auto& s : g.entities_in(Namespace::asl)) {
    auto ev = sign_evidence(g, s, handshape_relation);
    if (ev.handshape) by_handshape[*ev.handshape].push_back(std::move(ev));
  }
  std::set<std::pair<EntityId, EntityId>> pairs;
  for (auto& [_, bucket] : by_handshape)
    for (std::size_t i = 0; i < bucket.size(); ++i)
      for (std::size_t j = i + 1; j < bucket.size(); ++j)
        if (entity_equal(bucket[i], bucket[j])) pairs.emplace(bucket[i].id, bucket[j].id);
  return pairs;
}

/// Collapses each connected component of `pairs` onto its smallest entity.
inline std::map<EntityId, EntityId> merge_components(const std::set<std::pair<EntityId, EntityId>>& pairs) {
  std::map<EntityId, EntityId> parent;
  std::function<EntityId(const EntityId&)> find = [&](const EntityId& e) -> EntityId {
    auto it = parent.find(e);
    if (it == parent.end() || it->second == e) return e;
    auto root = find(it->second);
    parent[e] = root;
    return root;
  };
  for (auto& [a, b] : pairs) {
    parent.try_emplace(a, a);
    parent.try_emplace(b, b);
    auto ra = find(a), rb = find(b);
    if (ra == rb) continue;
    if (rb < ra) std::swap(ra, rb);
    parent[rb] = ra;
  }
  std::map<EntityId, EntityId> out;
  for (auto& [e, _] : parent) {
    auto root = find(e);
    if (root != e) out[e] = root;
  }
  return out;
}

inline KnowledgeGraph merge_signs(const KnowledgeGraph& g, const RefinementConfig& cfg, RefinementReport* report) {
  auto pairs = plan_sign_merges(g, cfg.handshape_relation);
  auto into = merge_components(pairs);
  auto canon = [&](const EntityId& e) {
    auto it = into.find(e);
    return it == into.end() ? e : it->second;
  };
  auto out = g.rebuild([](const Fact&) { return true; },
                       [&](Fact f) {
                         f.head = canon(f.head);
                         f.tail = canon(f.tail);
                         return f;
                       });
  if (report) {
    report->plan.entity_merges.insert(pairs.begin(), pairs.end());
    report->merged_into.insert(into.begin(), into.end());
    std::set<EntityId> merged_heads;
    for (auto& [_, root] : into) merged_heads.insert(root);
    for (auto& head : merged_heads) {
      std::map<std::string, std::set<std::string>> literal_tails;
      for (auto fi : out.outgoing(head)) {
        auto& f = out.facts()[fi];
        if (f.tail.is_literal()) literal_tails[f.relation.name].insert(f.tail.label());
      }
      for (auto& [rel, vals] : literal_tails)
        if (vals.size() > 1)
          report->conflicts.push_back(head.str() + "\t" + rel + "\t" +
                                      join(std::vector<std::string>(vals.begin(), vals.end()), ","));
    }
  }
  return out;
}

/// Keeps English words within one edit of some sign translation; drops the rest with their facts.
inline KnowledgeGraph merge_english(const KnowledgeGraph& g, std::vector<EntityId>* removed_out = nullptr) {
  std::set<std::string> translations;
  for (auto& f : g.facts())
    if (f.type() == RelType::translation && f.tail.ns() == Namespace::en) translations.insert(to_lower(f.tail.label()));
  std::set<EntityId> removed;
  for (auto& e : g.entities_in(Namespace::en)) {
    auto w = to_lower(e.label());
    bool near = translations.count(w) > 0;
    for (auto it = translations.begin(); !near && it != translations.end(); ++it) near = within_one_edit(w, *it);
    if (!near) removed.insert(e);
  }
  if (removed_out) removed_out->assign(removed.begin(), removed.end());
  return g.without_entities(removed);
}

/// Canonical decimal text: no leading zeros, no trailing fractional zeros, no "-0".
inline std::string normalize_decimal(std::string_view text) {
  text = trim(text);
  bool neg = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    neg = text.front() == '-';
    text.remove_prefix(1);
  }
  auto dot = text.find('.');
  std::string ip(text.substr(0, dot));
  std::string fp = dot == std::string_view::npos ? std::string{} : std::string(text.substr(dot + 1));
  ip.erase(0, std::min(ip.find_first_not_of('0'), ip.size()));
  while (!fp.empty() && fp.back() == '0') fp.pop_back();
  if (ip.empty()) ip = "0";
  std::string out = ip;
  if (!fp.empty()) out += "." + fp;
  if (neg && out != "0") out = "-" + out;
  return out;
}

/// Drops NaN literal tails, canonicalizes numeric literals and collapses duplicate facts.
inline KnowledgeGraph clean(const KnowledgeGraph& g, RefinementReport* report = nullptr) {
  std::size_t nan = 0, normalized = 0;
  auto out = g.rebuild(
      [&](const Fact& f) {
        bool drop = f.tail.is_literal() && std::isnan(*f.tail.value());
        nan += drop;
        return !drop;
      },
      [&](Fact f) {
        if (f.tail.is_literal()) {
          auto canon = normalize_decimal(f.tail.label());
          if (canon != f.tail.label()) {
            ++normalized;
            f.tail = EntityId::literal(canon);
          }
        }
        return f;
      });
  if (report) {
    report->nan_dropped += nan;
    report->literals_normalized += normalized;
  }
  return out;
}

/// Full refinement: relation merging, sign merging, English pruning, cleaning.
inline KnowledgeGraph refine(const KnowledgeGraph& g, const RefinementConfig& cfg, RefinementReport& report) {
  report.facts_before = g.size();
  report.entities_before = g.entities().size();
  auto step = merge_relations(g, cfg, &report.plan);
  step = merge_signs(step, cfg, &report);
  step = merge_english(step, &report.removed_english);
  step = clean(step, &report);
  report.facts_after = step.size();
  report.entities_after = step.entities().size();
  step.freeze();
  return step;
}

struct IngestOutcome {
  KnowledgeGraph graph;
  RefinementReport report;
  std::vector<std::string> diagnostics;
  std::map<std::string, std::size_t> facts_per_table;
};

inline IngestOutcome ingest(const Manifest& m) {
  IngestOutcome out;
  KnowledgeGraph raw;
  for (auto& src : m.tables) {
    auto table = load_table(src);
    auto res = rows_to_facts(table);
    for (auto& f : res.facts) raw.add_fact(f);
    out.facts_per_table[src.name] = res.facts.size();
    out.diagnostics.insert(out.diagnostics.end(), res.diagnostics.begin(), res.diagnostics.end());
  }
  out.graph = refine(raw, m.refinement, out.report);
  return out;
}

}  // namespace kgns
