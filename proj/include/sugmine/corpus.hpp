#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <unordered_set>

#include "sugmine/common.hpp"

#include <json.hpp>

namespace sugmine {

enum class Domain { hotel, electronics, travel, software };
enum class Label { suggestion, non_suggestion };
enum class Split { train, test };
enum class Provenance { original, swap_aug, crop_aug };

inline constexpr std::array<Domain, 4> kAllDomains = {Domain::hotel, Domain::electronics,
                                                      Domain::travel, Domain::software};

inline const char* to_string(Domain d) {
    switch (d) {
        case Domain::hotel: return "hotel";
        case Domain::electronics: return "electronics";
        case Domain::travel: return "travel";
        case Domain::software: return "software";
    }
    return "?";
}
inline const char* to_string(Label l) {
    return l == Label::suggestion ? "suggestion" : "non_suggestion";
}
inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::swap_aug: return "swap_aug";
        case Provenance::crop_aug: return "crop_aug";
    }
    return "?";
}

inline Domain domain_from_string(const std::string& s) {
    for (Domain d : kAllDomains)
        if (s == to_string(d)) return d;
    throw DataError("unknown domain: '" + s + "'");
}
inline Label label_from_string(const std::string& s) {
    if (s == "suggestion") return Label::suggestion;
    if (s == "non_suggestion") return Label::non_suggestion;
    throw DataError("unknown label: '" + s + "'");
}
inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw DataError("unknown split: '" + s + "'");
}
inline Provenance provenance_from_string(const std::string& s) {
    if (s == "original") return Provenance::original;
    if (s == "swap_aug") return Provenance::swap_aug;
    if (s == "crop_aug") return Provenance::crop_aug;
    throw DataError("unknown provenance: '" + s + "'");
}

/// One labeled review record.
struct Review {
    std::string id;
    std::string text;
    Domain domain = Domain::hotel;
    Label label = Label::non_suggestion;
    Split split = Split::train;
    Provenance provenance = Provenance::original;

    bool operator==(const Review&) const = default;
};

/// An ordered, immutable-after-load collection of reviews. Iteration order is
/// the file/build order and is stable across runs.
struct Dataset {
    std::vector<Review> reviews;
    std::set<Domain> domains;

    void rebuild_domains() {
        domains.clear();
        for (const auto& r : reviews) domains.insert(r.domain);
    }

    /// Checks the record-level invariants; throws DataError on violation.
    void validate() const {
        std::unordered_set<std::string> seen;
        for (const auto& r : reviews) {
            std::string trimmed = r.text;
            const auto b = trimmed.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) throw DataError("empty text for review id '" + r.id + "'");
            if (!seen.insert(r.id).second) throw DataError("duplicate review id '" + r.id + "'");
            if (r.provenance != Provenance::original && r.split != Split::train)
                throw DataError("augmented review outside train split: '" + r.id + "'");
            if (!domains.count(r.domain)) throw DataError("domain set out of sync");
        }
    }

    bool operator==(const Dataset& o) const { return reviews == o.reviews; }
};

struct BalanceCell {
    long long suggestion_count = 0;
    long long non_suggestion_count = 0;
    double ratio = 0.0;
};

/// Per-(domain, split) class counts; mirrors the dataset summary table layout.
struct BalanceStats {
    std::map<std::pair<Domain, Split>, BalanceCell> cells;

    const BalanceCell& at(Domain d, Split s) const {
        static const BalanceCell empty{};
        auto it = cells.find({d, s});
        return it == cells.end() ? empty : it->second;
    }
};

enum class FileFormat { jsonl, csv };

inline FileFormat format_from_string(const std::string& s) {
    if (s == "jsonl") return FileFormat::jsonl;
    if (s == "csv") return FileFormat::csv;
    throw UsageError("unknown format: '" + s + "' (expected csv or jsonl)");
}

namespace detail {

inline Review review_from_fields(const std::map<std::string, std::string>& f, long line_no) {
    auto need = [&](const char* key) -> const std::string& {
        auto it = f.find(key);
        if (it == f.end())
            throw DataError("line " + std::to_string(line_no) + ": missing field '" + key + "'");
        return it->second;
    };
    Review r;
    auto it = f.find("id");
    r.id = (it != f.end() && !it->second.empty()) ? it->second
                                                  : ("row" + std::to_string(line_no));
    r.text = need("text");
    if (r.text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError("line " + std::to_string(line_no) + ": empty text field");
    r.domain = domain_from_string(need("domain"));
    r.label = label_from_string(need("label"));
    it = f.find("split");
    r.split = (it == f.end() || it->second.empty()) ? Split::train : split_from_string(it->second);
    it = f.find("provenance");
    r.provenance = (it == f.end() || it->second.empty()) ? Provenance::original
                                                         : provenance_from_string(it->second);
    return r;
}

// RFC-4180 style row split; quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_row(const std::string& line, long line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            cur += c;
        }
    }
    if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Parses a dataset from JSONL or CSV. Malformed rows abort the load; rows are
/// never skipped silently. Records default to split=train, provenance=original.
inline Dataset load_dataset_from_string(const std::string& contents, FileFormat format) {
    Dataset ds;
    std::istringstream in(contents);
    std::string line;
    long line_no = 0;

    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::map<std::string, std::string> fields;
        if (format == FileFormat::jsonl) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError("line " + std::to_string(line_no) + ": bad JSON: " + e.what());
            }
            if (!j.is_object())
                throw DataError("line " + std::to_string(line_no) + ": expected a JSON object");
            for (auto& [k, v] : j.items()) {
                if (!v.is_string())
                    throw DataError("line " + std::to_string(line_no) + ": field '" + k +
                                    "' must be a string");
                fields[k] = v.get<std::string>();
            }
        } else {
            auto cells = detail::split_csv_row(line, line_no);
            if (header.empty()) {
                header = cells;
                continue;
            }
            if (cells.size() != header.size())
                throw DataError("line " + std::to_string(line_no) + ": expected " +
                                std::to_string(header.size()) + " columns, got " +
                                std::to_string(cells.size()));
            for (size_t i = 0; i < header.size(); ++i) fields[header[i]] = cells[i];
        }
        ds.reviews.push_back(detail::review_from_fields(fields, line_no));
    }
    ds.rebuild_domains();
    ds.validate();
    return ds;
}

inline Dataset load_dataset(const std::string& path, FileFormat format) {
    return load_dataset_from_string(read_file(path), format);
}

/// Canonical JSONL serialization; load -> serialize -> load round-trips.
inline std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    for (const auto& r : ds.reviews) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["text"] = r.text;
        j["domain"] = to_string(r.domain);
        j["label"] = to_string(r.label);
        j["split"] = to_string(r.split);
        j["provenance"] = to_string(r.provenance);
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    write_file(path, serialize_dataset(ds));
}

inline std::string dataset_hash(const Dataset& ds) { return hash_hex(serialize_dataset(ds)); }

inline BalanceStats balance_stats(const Dataset& ds) {
    BalanceStats stats;
    for (const auto& r : ds.reviews) {
        auto& cell = stats.cells[{r.domain, r.split}];
        if (r.label == Label::suggestion)
            ++cell.suggestion_count;
        else
            ++cell.non_suggestion_count;
    }
    for (auto& [key, cell] : stats.cells) {
        if (cell.non_suggestion_count == 0) {
            if (cell.suggestion_count != 0)
                throw DataError(std::string("balance ratio undefined for ") +
                                to_string(key.first) + "/" + to_string(key.second) +
                                ": zero non-suggestions with nonzero suggestions");
            cell.ratio = 0.0;
        } else {
            cell.ratio = static_cast<double>(cell.suggestion_count) /
                         static_cast<double>(cell.non_suggestion_count);
        }
    }
    return stats;
}

/// Deterministic per-(domain,label,split) subsample. Cell counts are scaled by
/// `fraction`, rounded half-up, with a floor of one row per non-empty cell.
inline Dataset stratified_subsample(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw UsageError("subsample fraction must be in (0,1]");
    if (fraction == 1.0) return ds;

    std::map<std::tuple<Domain, Label, Split>, std::vector<size_t>> cells;
    for (size_t i = 0; i < ds.reviews.size(); ++i) {
        const auto& r = ds.reviews[i];
        cells[{r.domain, r.label, r.split}].push_back(i);
    }
    std::vector<char> keep(ds.reviews.size(), 0);
    Rng rng(seed);
    for (auto& [key, idx] : cells) {
        const auto n = idx.size();
        auto want = static_cast<size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
        want = std::min(n, std::max<size_t>(want, 1));
        std::vector<size_t> pool = idx;
        for (size_t t = 0; t < want; ++t) {
            const auto pick = t + static_cast<size_t>(uniform_index(rng, pool.size() - t));
            std::swap(pool[t], pool[pick]);
            keep[pool[t]] = 1;
        }
    }
    Dataset out;
    for (size_t i = 0; i < ds.reviews.size(); ++i)
        if (keep[i]) out.reviews.push_back(ds.reviews[i]);
    out.rebuild_domains();
    return out;
}

}  // namespace sugmine
