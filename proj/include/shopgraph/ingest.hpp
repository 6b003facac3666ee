// Copyright 2026 The shopgraph Authors.
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

// Invoice-line ingestion: CSV parsing with reject reporting, cleaning,
// customer segmentation and the customer x item spend incidence matrix.

#ifndef SHOPGRAPH_INGEST_HPP
#define SHOPGRAPH_INGEST_HPP

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "shopgraph/common.hpp"

namespace shopgraph {

using Timestamp = std::chrono::sys_seconds;

struct InvoiceLine {
  std::string invoice_id;
  std::string stock_code;
  std::string description;
  std::int64_t quantity = 0;
  Timestamp invoice_date{};
  double unit_price = 0.0;
  std::optional<std::string> customer_id;
  std::string country;
};

/// Column names of the source file. Defaults follow the UCI Online Retail export.
struct ColumnSchema {
  std::string invoice_id = "InvoiceNo";
  std::string stock_code = "StockCode";
  std::string description = "Description";
  std::string quantity = "Quantity";
  std::string invoice_date = "InvoiceDate";
  std::string unit_price = "UnitPrice";
  std::string customer_id = "CustomerID";
  std::string country = "Country";
  char delimiter = ',';
};

struct RejectRecord {
  std::size_t row = 0;   // 1-based data row (header excluded)
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::string column;    // offending column, empty for structural problems
  std::string reason;
  std::string raw;
};

struct ParseResult {
  std::vector<InvoiceLine> lines;
  std::vector<RejectRecord> rejects;
};

struct CleanedTransaction {
  std::string customer_id;
  std::string stock_code;
  std::string invoice_id;
  Timestamp invoice_date{};
  std::int64_t quantity = 0;
  double unit_price = 0.0;
  double spend = 0.0;  // quantity * unit_price

  friend bool operator==(const CleanedTransaction&, const CleanedTransaction&) = default;
};

struct CleaningRules {
  std::string cancellation_prefix = "C";
  /// Stock codes dropped outright (postage, fees, manual adjustments...). Empty by default.
  std::set<std::string> excluded_stock_codes;
};

enum class Segment { Frequent, Infrequent, Wholesale };

inline std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::Frequent: return "frequent";
    case Segment::Infrequent: return "infrequent";
    case Segment::Wholesale: return "wholesale";
  }
  return "unknown";
}

struct SegmentationConfig {
  std::int64_t frequent_min_purchases = 5;
  /// A customer with any single invoice whose total quantity exceeds this is wholesale.
  std::int64_t wholesale_quantity_threshold = 400;
};

struct CustomerSegment {
  std::string customer_id;
  Segment segment = Segment::Infrequent;
  std::size_t n_purchases = 0;  // distinct invoices
};

// ---------------------------------------------------------------------------
// Timestamps

namespace detail {

// Howard Hinnant's days_from_civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

inline bool read_uint(std::string_view& s, unsigned& out, std::size_t max_digits) {
  std::size_t n = 0;
  unsigned v = 0;
  while (n < s.size() && n < max_digits && s[n] >= '0' && s[n] <= '9') {
    v = v * 10 + static_cast<unsigned>(s[n] - '0');
    ++n;
  }
  if (n == 0) return false;
  out = v;
  s.remove_prefix(n);
  return true;
}

inline bool expect(std::string_view& s, char c) {
  if (s.empty() || s.front() != c) return false;
  s.remove_prefix(1);
  return true;
}

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c >> 5) == 0x6) extra = 1;
    else if ((c >> 4) == 0xE) extra = 2;
    else if ((c >> 3) == 0x1E) extra = 3;
    else return false;
    if (i + extra >= s.size() && extra > 0) return false;
    for (std::size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace detail

/// Parses "YYYY-MM-DD[ T]HH:MM[:SS]" or "M/D/YYYY H:MM[:SS]" (the two shapes the
/// UCI export is commonly found in). Returns nullopt on anything else.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  std::string t = trim(text);
  std::string_view s = t;
  unsigned y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (s.size() >= 10 && s[4] == '-') {
    if (!detail::read_uint(s, y, 4) || !detail::expect(s, '-') || !detail::read_uint(s, mo, 2) ||
        !detail::expect(s, '-') || !detail::read_uint(s, d, 2))
      return std::nullopt;
  } else {
    if (!detail::read_uint(s, mo, 2) || !detail::expect(s, '/') || !detail::read_uint(s, d, 2) ||
        !detail::expect(s, '/') || !detail::read_uint(s, y, 4))
      return std::nullopt;
  }
  if (!s.empty()) {
    if (s.front() != ' ' && s.front() != 'T') return std::nullopt;
    s.remove_prefix(1);
    if (!detail::read_uint(s, hh, 2) || !detail::expect(s, ':') || !detail::read_uint(s, mm, 2))
      return std::nullopt;
    if (!s.empty()) {
      if (!detail::expect(s, ':') || !detail::read_uint(s, ss, 2)) return std::nullopt;
    }
    if (!s.empty()) return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  const std::int64_t days = detail::days_from_civil(y, mo, d);
  std::int64_t yy;
  unsigned m2, d2;
  detail::civil_from_days(days, yy, m2, d2);
  if (m2 != mo || d2 != d) return std::nullopt;  // e.g. 2011-02-30
  return Timestamp{std::chrono::seconds{days * 86400 + hh * 3600 + mm * 60 + ss}};
}

inline std::string format_timestamp(Timestamp ts) {
  const std::int64_t secs = ts.time_since_epoch().count();
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02lld:%02lld:%02lld", static_cast<long long>(y), m,
                d, static_cast<long long>(rem / 3600), static_cast<long long>(rem % 3600 / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

/// One logical CSV record (quoted fields may span physical lines).
struct CsvRecord {
  std::vector<std::string> fields;
  std::string raw;
  std::size_t line = 0;
  bool well_formed = true;  // false on an unterminated quote
};

/// Splits delimited text into records following RFC 4180 quoting.
class CsvReader {
 public:
  CsvReader(std::string_view text, char delimiter) : text_(text), delim_(delimiter) {
    if (text_.size() >= 3 && text_.substr(0, 3) == "\xEF\xBB\xBF") text_.remove_prefix(3);
  }

  bool next(CsvRecord& rec) {
    if (pos_ >= text_.size()) return false;
    rec.fields.clear();
    rec.well_formed = true;
    rec.line = line_;
    const std::size_t start = pos_;
    std::string field;
    bool in_quotes = false;
    bool quoted_field = false;
    while (true) {
      if (pos_ >= text_.size()) {
        if (in_quotes) rec.well_formed = false;
        rec.fields.push_back(std::move(field));
        break;
      }
      const char c = text_[pos_];
      if (in_quotes) {
        if (c == '"') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
            field += '"';
            pos_ += 2;
            continue;
          }
          in_quotes = false;
          ++pos_;
          continue;
        }
        if (c == '\n') ++line_;
        field += c;
        ++pos_;
        continue;
      }
      if (c == '"' && field.empty() && !quoted_field) {
        in_quotes = true;
        quoted_field = true;
        ++pos_;
        continue;
      }
      if (c == delim_) {
        rec.fields.push_back(std::move(field));
        field.clear();
        quoted_field = false;
        ++pos_;
        continue;
      }
      if (c == '\r' || c == '\n') {
        rec.fields.push_back(std::move(field));
        const std::size_t end = pos_;
        if (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') ++pos_;
        ++pos_;
        ++line_;
        rec.raw = std::string(text_.substr(start, end - start));
        return true;
      }
      field += c;
      ++pos_;
    }
    rec.raw = std::string(text_.substr(start, pos_ - start));
    return true;
  }

 private:
  std::string_view text_;
  char delim_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

namespace detail {

/// "17850.0" -> "17850": spreadsheet exports turn integer ids into floats.
inline std::string normalize_customer_id(std::string id) {
  if (id.size() > 2 && id.ends_with(".0") &&
      std::all_of(id.begin(), id.end() - 2, [](char c) { return c >= '0' && c <= '9'; }))
    id.resize(id.size() - 2);
  return id;
}

}  // namespace detail

/// Parses invoice lines from delimited text. Malformed rows go to the reject
/// report; missing mandatory columns and invalid UTF-8 are hard errors.
inline ParseResult parse_invoice_text(std::string_view text, const ColumnSchema& schema = {},
                                      const std::string& source = "<memory>") {
  CsvReader reader(text, schema.delimiter);
  CsvRecord rec;
  if (!reader.next(rec)) throw Error(source + ": missing header row");
  if (!detail::valid_utf8(rec.raw)) throw Error(source + ": line 1: header is not valid UTF-8");

  std::unordered_map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < rec.fields.size(); ++i) header.emplace(trim(rec.fields[i]), i);

  auto locate = [&](const std::string& name, bool mandatory) -> std::optional<std::size_t> {
    auto it = header.find(name);
    if (it != header.end()) return it->second;
    if (mandatory) throw Error(source + ": missing mandatory column '" + name + "'");
    return std::nullopt;
  };
  const std::size_t c_inv = *locate(schema.invoice_id, true);
  const std::size_t c_stock = *locate(schema.stock_code, true);
  const std::size_t c_qty = *locate(schema.quantity, true);
  const std::size_t c_date = *locate(schema.invoice_date, true);
  const std::size_t c_price = *locate(schema.unit_price, true);
  const std::size_t c_cust = *locate(schema.customer_id, true);
  const auto c_desc = locate(schema.description, false);
  const auto c_country = locate(schema.country, false);
  const std::size_t n_cols = rec.fields.size();

  ParseResult out;
  std::size_t row = 0;
  while (reader.next(rec)) {
    if (rec.fields.size() == 1 && trim(rec.fields[0]).empty()) continue;  // blank line
    ++row;
    auto reject = [&](std::string column, std::string reason) {
      out.rejects.push_back({row, rec.line, std::move(column), std::move(reason), rec.raw});
    };
    if (!detail::valid_utf8(rec.raw))
      throw Error(source + ": line " + std::to_string(rec.line) + " (row " + std::to_string(row) +
                  "): invalid UTF-8");
    if (!rec.well_formed) {
      reject("", "unterminated quoted field");
      continue;
    }
    if (rec.fields.size() != n_cols) {
      reject("", "expected " + std::to_string(n_cols) + " fields, found " +
                     std::to_string(rec.fields.size()));
      continue;
    }
    InvoiceLine l;
    l.invoice_id = trim(rec.fields[c_inv]);
    if (l.invoice_id.empty()) {
      reject(schema.invoice_id, "empty invoice id");
      continue;
    }
    l.stock_code = trim(rec.fields[c_stock]);
    if (l.stock_code.empty()) {
      reject(schema.stock_code, "empty stock code");
      continue;
    }
    if (!parse_int64(rec.fields[c_qty], l.quantity)) {
      reject(schema.quantity, "non-integer quantity '" + rec.fields[c_qty] + "'");
      continue;
    }
    if (!parse_double(rec.fields[c_price], l.unit_price)) {
      reject(schema.unit_price, "non-numeric unit price '" + rec.fields[c_price] + "'");
      continue;
    }
    auto ts = parse_timestamp(rec.fields[c_date]);
    if (!ts) {
      reject(schema.invoice_date, "unparseable timestamp '" + rec.fields[c_date] + "'");
      continue;
    }
    l.invoice_date = *ts;
    std::string cust = trim(rec.fields[c_cust]);
    if (!cust.empty()) l.customer_id = detail::normalize_customer_id(std::move(cust));
    if (c_desc) l.description = trim(rec.fields[*c_desc]);
    if (c_country) l.country = trim(rec.fields[*c_country]);
    out.lines.push_back(std::move(l));
  }
  return out;
}

inline ParseResult parse_invoice_csv(const std::filesystem::path& path,
                                     const ColumnSchema& schema = {}) {
  if (!std::filesystem::exists(path)) throw Error("input file not found: " + path.string());
  return parse_invoice_text(read_file(path.string()), schema, path.string());
}

// ---------------------------------------------------------------------------
// Cleaning and segmentation

inline std::vector<CleanedTransaction> clean_transactions(const std::vector<InvoiceLine>& lines,
                                                          const CleaningRules& rules = {}) {
  std::vector<CleanedTransaction> out;
  out.reserve(lines.size());
  for (const auto& l : lines) {
    if (!l.customer_id || l.customer_id->empty()) continue;
    if (!rules.cancellation_prefix.empty() && l.invoice_id.starts_with(rules.cancellation_prefix))
      continue;
    if (l.quantity <= 0 || !(l.unit_price > 0.0)) continue;
    if (rules.excluded_stock_codes.contains(l.stock_code)) continue;
    out.push_back({*l.customer_id, l.stock_code, l.invoice_id, l.invoice_date, l.quantity,
                   l.unit_price, static_cast<double>(l.quantity) * l.unit_price});
  }
  return out;
}

/// Inverse view used to re-run cleaning on cleaned data.
inline InvoiceLine to_invoice_line(const CleanedTransaction& t) {
  InvoiceLine l;
  l.invoice_id = t.invoice_id;
  l.stock_code = t.stock_code;
  l.quantity = t.quantity;
  l.invoice_date = t.invoice_date;
  l.unit_price = t.unit_price;
  l.customer_id = t.customer_id;
  return l;
}

/// Wholesale first (any invoice above the quantity threshold), then frequent vs
/// infrequent by distinct-invoice count. Output sorted by customer id.
inline std::vector<CustomerSegment> segment_customers(const std::vector<CleanedTransaction>& txns,
                                                      const SegmentationConfig& cfg = {}) {
  std::map<std::string, std::map<std::string, std::int64_t>> units;  // customer -> invoice -> qty
  for (const auto& t : txns) units[t.customer_id][t.invoice_id] += t.quantity;
  std::vector<CustomerSegment> out;
  out.reserve(units.size());
  for (const auto& [customer, invoices] : units) {
    CustomerSegment s{customer, Segment::Infrequent, invoices.size()};
    const bool wholesale = std::any_of(invoices.begin(), invoices.end(), [&](const auto& kv) {
      return kv.second > cfg.wholesale_quantity_threshold;
    });
    if (wholesale)
      s.segment = Segment::Wholesale;
    else if (static_cast<std::int64_t>(invoices.size()) >= cfg.frequent_min_purchases)
      s.segment = Segment::Frequent;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::string> members_of(const std::vector<CustomerSegment>& segments,
                                           Segment which) {
  std::vector<std::string> ids;
  for (const auto& s : segments)
    if (s.segment == which) ids.push_back(s.customer_id);
  return ids;
}

// ---------------------------------------------------------------------------
// Incidence matrix

/// Sparse non-negative customer x item matrix. Rows and columns are sorted id
/// lists; entries are kept sorted by (row, col) and are strictly positive.
class PurchaseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  PurchaseMatrix() = default;

  /// Validates and canonicalises: ids must be unique, entries positive and in range.
  PurchaseMatrix(std::vector<std::string> row_ids, std::vector<std::string> col_ids,
                 std::vector<Entry> entries)
      : row_ids_(std::move(row_ids)), col_ids_(std::move(col_ids)), entries_(std::move(entries)) {
    if (!std::is_sorted(row_ids_.begin(), row_ids_.end()) ||
        std::adjacent_find(row_ids_.begin(), row_ids_.end()) != row_ids_.end())
      throw Error("PurchaseMatrix: row ids must be sorted and unique");
    if (!std::is_sorted(col_ids_.begin(), col_ids_.end()) ||
        std::adjacent_find(col_ids_.begin(), col_ids_.end()) != col_ids_.end())
      throw Error("PurchaseMatrix: column ids must be sorted and unique");
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.row >= row_ids_.size() || e.col >= col_ids_.size())
        throw Error("PurchaseMatrix: entry index out of range");
      if (!(e.value > 0.0) || !std::isfinite(e.value))
        throw Error("PurchaseMatrix: stored entries must be finite and strictly positive");
      if (i > 0 && entries_[i - 1].row == e.row && entries_[i - 1].col == e.col)
        throw Error("PurchaseMatrix: duplicate entry");
    }
  }

  std::size_t rows() const { return row_ids_.size(); }
  std::size_t cols() const { return col_ids_.size(); }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<std::string>& row_ids() const { return row_ids_; }
  const std::vector<std::string>& col_ids() const { return col_ids_; }
  const std::vector<Entry>& entries() const { return entries_; }

  double at(std::size_t r, std::size_t c) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{r, c},
                               [](const Entry& e, const std::pair<std::size_t, std::size_t>& k) {
                                 return e.row != k.first ? e.row < k.first : e.col < k.second;
                               });
    return (it != entries_.end() && it->row == r && it->col == c) ? it->value : 0.0;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()),
                                              static_cast<Eigen::Index>(cols()));
    for (const auto& e : entries_)
      m(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = e.value;
    return m;
  }

  /// Column subset (kept in sorted id order). Unknown codes are an error.
  PurchaseMatrix select_columns(const std::vector<std::string>& codes) const {
    std::vector<std::string> keep(codes.begin(), codes.end());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    std::vector<std::ptrdiff_t> remap(cols(), -1);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      auto it = std::lower_bound(col_ids_.begin(), col_ids_.end(), keep[k]);
      if (it == col_ids_.end() || *it != keep[k])
        throw Error("select_columns: unknown column '" + keep[k] + "'");
      remap[static_cast<std::size_t>(it - col_ids_.begin())] = static_cast<std::ptrdiff_t>(k);
    }
    std::vector<Entry> kept;
    for (const auto& e : entries_)
      if (remap[e.col] >= 0) kept.push_back({e.row, static_cast<std::size_t>(remap[e.col]), e.value});
    return PurchaseMatrix(row_ids_, std::move(keep), std::move(kept));
  }

  friend bool operator==(const PurchaseMatrix&, const PurchaseMatrix&) = default;

 private:
  std::vector<std::string> row_ids_;
  std::vector<std::string> col_ids_;
  std::vector<Entry> entries_;
};

/// Sums spend per (member customer, stock code). Columns are the stock codes
/// bought by at least one member.
inline PurchaseMatrix build_incidence_matrix(const std::vector<CleanedTransaction>& txns,
                                             const std::vector<std::string>& members) {
  if (members.empty()) throw Error("build_incidence_matrix: empty member set");
  std::set<std::string> member_set(members.begin(), members.end());
  std::set<std::string> seen;
  std::map<std::pair<std::string, std::string>, double> sums;
  for (const auto& t : txns) {
    if (!member_set.contains(t.customer_id)) continue;
    seen.insert(t.customer_id);
    sums[{t.customer_id, t.stock_code}] += t.spend;
  }
  if (seen.size() != member_set.size()) {
    std::string missing;
    for (const auto& m : member_set)
      if (!seen.contains(m)) missing += (missing.empty() ? "" : ", ") + m;
    throw Error("build_incidence_matrix: members without transactions: " + missing);
  }
  std::vector<std::string> rows(member_set.begin(), member_set.end());
  std::set<std::string> col_set;
  for (const auto& [key, v] : sums) col_set.insert(key.second);
  std::vector<std::string> cols(col_set.begin(), col_set.end());
  std::vector<PurchaseMatrix::Entry> entries;
  entries.reserve(sums.size());
  for (const auto& [key, v] : sums) {
    if (!(v > 0.0)) continue;
    const auto r = static_cast<std::size_t>(std::lower_bound(rows.begin(), rows.end(), key.first) - rows.begin());
    const auto c = static_cast<std::size_t>(std::lower_bound(cols.begin(), cols.end(), key.second) - cols.begin());
    entries.push_back({r, c, v});
  }
  return PurchaseMatrix(std::move(rows), std::move(cols), std::move(entries));
}

/// Most frequent description per stock code (ties: lexicographically smallest).
inline std::map<std::string, std::string> item_descriptions(const std::vector<InvoiceLine>& lines) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& l : lines)
    if (!l.description.empty()) ++counts[l.stock_code][l.description];
  std::map<std::string, std::string> out;
  for (const auto& [code, descs] : counts) {
    auto best = descs.begin();
    for (auto it = descs.begin(); it != descs.end(); ++it)
      if (it->second > best->second) best = it;
    out.emplace(code, best->first);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix files: <stem>.triplets.csv (row_id,col_id,value) + <stem>.rows.txt + <stem>.cols.txt

inline std::string format_triplets(const PurchaseMatrix& m) {
  std::string out = "row_id,col_id,value\n";
  for (const auto& e : m.entries()) {
    out += csv_field(m.row_ids()[e.row]);
    out += ',';
    out += csv_field(m.col_ids()[e.col]);
    out += ',';
    out += format_double(e.value);
    out += '\n';
  }
  return out;
}

inline std::string format_id_list(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    out += id;
    out += '\n';
  }
  return out;
}

inline std::vector<std::string> parse_id_list(std::string_view text) {
  std::vector<std::string> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) ids.emplace_back(line);
    pos = nl + 1;
  }
  return ids;
}

inline void write_matrix_files(const PurchaseMatrix& m, const std::filesystem::path& stem) {
  write_file(stem.string() + ".triplets.csv", format_triplets(m));
  write_file(stem.string() + ".rows.txt", format_id_list(m.row_ids()));
  write_file(stem.string() + ".cols.txt", format_id_list(m.col_ids()));
}

inline PurchaseMatrix read_matrix_files(const std::filesystem::path& stem) {
  auto rows = parse_id_list(read_file(stem.string() + ".rows.txt"));
  auto cols = parse_id_list(read_file(stem.string() + ".cols.txt"));
  const std::string trip = read_file(stem.string() + ".triplets.csv");
  CsvReader reader(trip, ',');
  CsvRecord rec;
  if (!reader.next(rec)) throw Error("matrix file missing header: " + stem.string());
  std::vector<PurchaseMatrix::Entry> entries;
  while (reader.next(rec)) {
    if (rec.fields.size() != 3) throw Error("malformed triplet line " + std::to_string(rec.line));
    auto r = std::lower_bound(rows.begin(), rows.end(), rec.fields[0]);
    auto c = std::lower_bound(cols.begin(), cols.end(), rec.fields[1]);
    double v = 0;
    if (r == rows.end() || *r != rec.fields[0] || c == cols.end() || *c != rec.fields[1] ||
        !parse_double(rec.fields[2], v))
      throw Error("bad triplet at line " + std::to_string(rec.line) + " of " + stem.string());
    entries.push_back({static_cast<std::size_t>(r - rows.begin()),
                       static_cast<std::size_t>(c - cols.begin()), v});
  }
  return PurchaseMatrix(std::move(rows), std::move(cols), std::move(entries));
}

/// Line-delimited JSON reject report, one object per rejected row.
inline std::string format_reject_report(const std::vector<RejectRecord>& rejects) {
  std::string out;
  for (const auto& r : rejects) {
    nlohmann::json j{{"row", r.row}, {"line", r.line}, {"column", r.column},
                     {"reason", r.reason}, {"raw", r.raw}};
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_INGEST_HPP
