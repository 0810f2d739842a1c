#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stprotein/csv.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

/// A dense matrix with row ids and column names, the common shape of every
/// tabular file this toolkit reads or writes.
struct NamedMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_names;
    Matrix values;
};

/// Paired spatial data: coordinates, RNA counts, and optionally protein counts,
/// all row-aligned on spot_ids.
struct SpatialOmicsDataset {
    std::vector<std::string> spot_ids;
    Matrix coords;      // N x 2
    Matrix rna_counts;  // N x G
    std::vector<std::string> gene_names;
    bool has_protein = false;
    Matrix protein_counts; // N x P when has_protein
    std::vector<std::string> protein_names;

    std::size_t n_spots() const { return spot_ids.size(); }
};

namespace detail {

inline void require_unique(const std::vector<std::string>& names, const std::string& what) {
    std::unordered_set<std::string> seen;
    seen.reserve(names.size());
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw DuplicateId("duplicate " + what + " '" + n + "'");
    }
}

inline void require_finite(const Matrix& m, const std::string& context) {
    if (!m.allFinite()) throw ParseError("non-finite value in " + context);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::string text = csv::read_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(std::move(cur));
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

} // namespace detail

/// Read a matrix CSV: header row of column names with the first field naming
/// the row-id column, then one row per id. Values may be any finite real.
inline NamedMatrix load_matrix_csv(const std::string& path) {
    const auto rows = csv::parse(csv::read_file(path));
    if (rows.empty()) throw ParseError(path + ": empty file");
    const auto& header = rows[0];
    if (header.size() < 2) throw ParseError(path + ": header needs an id column and at least one value column");

    NamedMatrix out;
    out.col_names.assign(header.begin() + 1, header.end());
    detail::require_unique(out.col_names, "column name in " + path);

    const std::size_t n = rows.size() - 1;
    const std::size_t cols = out.col_names.size();
    if (n == 0) throw ParseError(path + ": no data rows");
    out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
    out.row_ids.reserve(n);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            throw ParseError(path + ": row " + std::to_string(r + 1) + " has " +
                             std::to_string(row.size()) + " fields, expected " +
                             std::to_string(header.size()));
        out.row_ids.push_back(row[0]);
        for (std::size_t c = 1; c < row.size(); ++c)
            out.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
                csv::parse_double(row[c], path + " row " + std::to_string(r + 1));
    }
    detail::require_unique(out.row_ids, "row id in " + path);
    detail::require_finite(out.values, path);
    return out;
}

/// Read a MatrixMarket coordinate file (1-based indices, real general) into a
/// dense matrix. Row ids and column names come from the `<path>.rows` and
/// `<path>.cols` sidecars, one name per line.
inline NamedMatrix load_matrix_market(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) throw ParseError(path + ": empty file");
    const std::string expect = "%%MatrixMarket matrix coordinate real general";
    if (lines[0].rfind(expect, 0) != 0)
        throw ParseError(path + ": unsupported MatrixMarket header '" + lines[0] + "'");

    std::size_t li = 1;
    while (li < lines.size() && (lines[li].empty() || lines[li][0] == '%')) ++li;
    if (li >= lines.size()) throw ParseError(path + ": missing size line");

    auto split_ws = [](const std::string& s) {
        std::vector<std::string> toks;
        std::size_t i = 0;
        while (i < s.size()) {
            while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
            std::size_t j = i;
            while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
            if (j > i) toks.push_back(s.substr(i, j - i));
            i = j;
        }
        return toks;
    };

    const auto size_toks = split_ws(lines[li]);
    if (size_toks.size() != 3) throw ParseError(path + ": size line needs rows cols nnz");
    const auto n_rows = static_cast<std::size_t>(csv::parse_double(size_toks[0], path + " size line"));
    const auto n_cols = static_cast<std::size_t>(csv::parse_double(size_toks[1], path + " size line"));
    const auto nnz = static_cast<std::size_t>(csv::parse_double(size_toks[2], path + " size line"));
    if (n_rows == 0 || n_cols == 0) throw ParseError(path + ": zero-sized matrix");

    NamedMatrix out;
    out.values = Matrix::Zero(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
    std::size_t seen = 0;
    for (++li; li < lines.size(); ++li) {
        if (lines[li].empty() || lines[li][0] == '%') continue;
        const auto toks = split_ws(lines[li]);
        if (toks.size() != 3) throw ParseError(path + ": entry line needs i j value");
        const auto i = static_cast<std::size_t>(csv::parse_double(toks[0], path));
        const auto j = static_cast<std::size_t>(csv::parse_double(toks[1], path));
        const double v = csv::parse_double(toks[2], path);
        if (i < 1 || i > n_rows || j < 1 || j > n_cols)
            throw ParseError(path + ": entry index (" + toks[0] + "," + toks[1] + ") out of range");
        out.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = v;
        ++seen;
    }
    if (seen != nnz)
        throw ParseError(path + ": size line promises " + std::to_string(nnz) + " entries, found " +
                         std::to_string(seen));

    out.row_ids = detail::read_lines(path + ".rows");
    out.col_names = detail::read_lines(path + ".cols");
    if (out.row_ids.size() != n_rows)
        throw DimensionMismatch(path + ".rows has " + std::to_string(out.row_ids.size()) +
                                " names for " + std::to_string(n_rows) + " rows");
    if (out.col_names.size() != n_cols)
        throw DimensionMismatch(path + ".cols has " + std::to_string(out.col_names.size()) +
                                " names for " + std::to_string(n_cols) + " columns");
    detail::require_unique(out.row_ids, "row id in " + path);
    detail::require_unique(out.col_names, "column name in " + path);
    detail::require_finite(out.values, path);
    return out;
}

/// Load a matrix in either supported format, dispatching on the MatrixMarket banner.
inline NamedMatrix load_named_matrix(const std::string& path) {
    const std::string text = csv::read_file(path);
    if (text.rfind("%%MatrixMarket", 0) == 0) return load_matrix_market(path);
    return load_matrix_csv(path);
}

/// Write a matrix CSV in the layout load_matrix_csv reads.
inline void save_matrix_csv(const std::string& path, const NamedMatrix& m,
                            const std::string& id_header = "spot_id") {
    std::string out;
    std::vector<std::string> header;
    header.reserve(m.col_names.size() + 1);
    header.push_back(id_header);
    header.insert(header.end(), m.col_names.begin(), m.col_names.end());
    out += csv::join_row(header);
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        std::vector<std::string> row;
        row.reserve(m.col_names.size() + 1);
        row.push_back(m.row_ids[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m.values.cols(); ++j)
            row.push_back(csv::format_double(m.values(i, j)));
        out += csv::join_row(row);
    }
    csv::write_file_atomic(path, out);
}

namespace detail {

/// Reorder `m` so its rows follow `order`; every id in `order` must exist in `m`
/// and the two id sets must be equal.
inline NamedMatrix align_rows(const NamedMatrix& m, const std::vector<std::string>& order,
                              const std::string& what) {
    if (m.row_ids.size() != order.size())
        throw DimensionMismatch(what + " has " + std::to_string(m.row_ids.size()) +
                                " spots, coordinates list " + std::to_string(order.size()));
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(m.row_ids.size());
    for (std::size_t i = 0; i < m.row_ids.size(); ++i) index.emplace(m.row_ids[i], i);
    NamedMatrix out;
    out.col_names = m.col_names;
    out.row_ids = order;
    out.values.resize(m.values.rows(), m.values.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto it = index.find(order[i]);
        if (it == index.end())
            throw DimensionMismatch("spot '" + order[i] + "' missing from " + what);
        out.values.row(static_cast<Eigen::Index>(i)) =
            m.values.row(static_cast<Eigen::Index>(it->second));
    }
    return out;
}

inline void require_nonnegative(const Matrix& m, const std::string& context) {
    if ((m.array() < 0.0).any()) throw ParseError("negative count in " + context);
}

} // namespace detail

/// Load coordinates (CSV with columns spot_id,x,y) plus RNA counts and optional
/// protein counts, aligning all rows to the coordinate file's spot order.
inline SpatialOmicsDataset load_dataset(const std::string& rna_path, const std::string& coords_path,
                                        const std::optional<std::string>& protein_path = std::nullopt) {
    NamedMatrix coords = load_matrix_csv(coords_path);
    if (coords.col_names != std::vector<std::string>{"x", "y"})
        throw ParseError(coords_path + ": expected header spot_id,x,y");

    SpatialOmicsDataset ds;
    ds.spot_ids = coords.row_ids;
    ds.coords = coords.values;

    NamedMatrix rna = detail::align_rows(load_named_matrix(rna_path), ds.spot_ids, rna_path);
    detail::require_nonnegative(rna.values, rna_path);
    ds.rna_counts = std::move(rna.values);
    ds.gene_names = std::move(rna.col_names);

    if (protein_path) {
        NamedMatrix prot = detail::align_rows(load_named_matrix(*protein_path), ds.spot_ids, *protein_path);
        detail::require_nonnegative(prot.values, *protein_path);
        ds.has_protein = true;
        ds.protein_counts = std::move(prot.values);
        ds.protein_names = std::move(prot.col_names);
    }
    return ds;
}

} // namespace stprotein
