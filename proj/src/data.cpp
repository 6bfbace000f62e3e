#include "cfr/data.hpp"

#include "cfr/random.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cfr {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = cell.find_first_not_of(' ');
        out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw std::runtime_error("non-numeric cell '" + cell + "' in column " + column + " at row " +
                                 std::to_string(row));
    }
    return value;
}

void check_length(const Vector& v, Eigen::Index n, const char* name) {
    if (v.size() != n) throw std::invalid_argument(std::string("column length mismatch: ") + name);
}

}  // namespace

Eigen::Index Dataset::n_treated() const {
    return static_cast<Eigen::Index>(treatment.sum() + 0.5);
}

void Dataset::validate() const {
    const Eigen::Index rows = n();
    if (rows < 1 || d() < 1) throw std::invalid_argument("dataset needs n >= 1 and d >= 1");
    check_length(treatment, rows, "t");
    check_length(y_factual, rows, "yf");
    if (y_counterfactual) check_length(*y_counterfactual, rows, "ycf");
    if (mu0) check_length(*mu0, rows, "mu0");
    if (mu1) check_length(*mu1, rows, "mu1");
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (treatment[i] != 0.0 && treatment[i] != 1.0) throw std::invalid_argument("non-binary treatment");
    }
    if (!covariates.allFinite()) throw std::invalid_argument("non-finite covariate");
}

Dataset Dataset::factual_view() const {
    Dataset out;
    out.covariates = covariates;
    out.treatment = treatment;
    out.y_factual = y_factual;
    return out;
}

Vector Dataset::y0() const {
    if (!y_counterfactual) throw std::logic_error("potential outcomes require ycf");
    return (treatment.array() > 0.5).select(*y_counterfactual, y_factual);
}

Vector Dataset::y1() const {
    if (!y_counterfactual) throw std::logic_error("potential outcomes require ycf");
    return (treatment.array() > 0.5).select(y_factual, *y_counterfactual);
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
    const auto m = static_cast<Eigen::Index>(rows.size());
    Dataset out;
    out.covariates.resize(m, d());
    out.treatment.resize(m);
    out.y_factual.resize(m);
    if (y_counterfactual) out.y_counterfactual = Vector(m);
    if (mu0) out.mu0 = Vector(m);
    if (mu1) out.mu1 = Vector(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        out.covariates.row(k) = covariates.row(i);
        out.treatment[k] = treatment[i];
        out.y_factual[k] = y_factual[i];
        if (y_counterfactual) (*out.y_counterfactual)[k] = (*y_counterfactual)[i];
        if (mu0) (*out.mu0)[k] = (*mu0)[i];
        if (mu1) (*out.mu1)[k] = (*mu1)[i];
    }
    return out;
}

std::uint64_t factual_checksum(const Dataset& data) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* p, Eigen::Index count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p);
        for (std::size_t k = 0; k < static_cast<std::size_t>(count) * sizeof(double); ++k) {
            h ^= bytes[k];
            h *= 1099511628211ULL;
        }
    };
    mix(data.covariates.data(), data.covariates.size());
    mix(data.treatment.data(), data.treatment.size());
    mix(data.y_factual.data(), data.y_factual.size());
    return h;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file " + path);
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    const auto header = split_line(line);

    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = c;
    std::size_t d = 0;
    while (column.count("x" + std::to_string(d))) ++d;
    for (const char* required : {"t", "yf"}) {
        if (!column.count(required)) throw std::runtime_error(std::string("missing required column ") + required);
    }
    if (d == 0) throw std::runtime_error("missing required column x0");

    std::vector<std::vector<double>> rows;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("ragged row " + std::to_string(row_no) + ": expected " +
                                     std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        }
        std::vector<double> values(header.size());
        for (std::size_t c = 0; c < header.size(); ++c) values[c] = parse_cell(cells[c], row_no, header[c]);
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error("no data rows in " + path);

    const auto n = static_cast<Eigen::Index>(rows.size());
    Dataset data;
    data.covariates.resize(n, static_cast<Eigen::Index>(d));
    data.treatment.resize(n);
    data.y_factual.resize(n);
    auto optional_column = [&](const char* name) -> std::optional<Vector> {
        auto it = column.find(name);
        if (it == column.end()) return std::nullopt;
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = rows[static_cast<std::size_t>(i)][it->second];
        return v;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < d; ++k) data.covariates(i, static_cast<Eigen::Index>(k)) = r[column["x" + std::to_string(k)]];
        const double t = r[column["t"]];
        if (t != 0.0 && t != 1.0) throw std::runtime_error("non-binary treatment at row " + std::to_string(i + 1));
        data.treatment[i] = t;
        data.y_factual[i] = r[column["yf"]];
    }
    data.y_counterfactual = optional_column("ycf");
    data.mu0 = optional_column("mu0");
    data.mu1 = optional_column("mu1");
    data.validate();
    return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (Eigen::Index k = 0; k < data.d(); ++k) out << 'x' << k << ',';
    out << "t,yf";
    if (data.y_counterfactual) out << ",ycf";
    if (data.mu0) out << ",mu0";
    if (data.mu1) out << ",mu1";
    out << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        for (Eigen::Index k = 0; k < data.d(); ++k) out << format_double(data.covariates(i, k)) << ',';
        out << (data.treatment[i] > 0.5 ? '1' : '0') << ',' << format_double(data.y_factual[i]);
        if (data.y_counterfactual) out << ',' << format_double((*data.y_counterfactual)[i]);
        if (data.mu0) out << ',' << format_double((*data.mu0)[i]);
        if (data.mu1) out << ',' << format_double((*data.mu1)[i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

NearestNeighborMap nearest_cross_group(const Dataset& data) {
    const Eigen::Index n = data.n();
    const Eigen::Index treated = data.n_treated();
    if (treated == 0 || treated == n) throw std::invalid_argument("degenerate treatment assignment");

    NearestNeighborMap nn;
    nn.j.resize(n);
    nn.dist.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index best_j = -1;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (data.treatment[k] == data.treatment[i]) continue;
            const double sq = (data.covariates.row(i) - data.covariates.row(k)).squaredNorm();
            if (sq < best) {
                best = sq;
                best_j = k;
            }
        }
        nn.j[i] = best_j;
        nn.dist[i] = std::sqrt(best);
    }
    return nn;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0,1)");
    const auto n = static_cast<std::size_t>(data.n());
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n) throw std::invalid_argument("split would leave an empty part");

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(seed);
    // Fisher-Yates with explicit index draws; std::shuffle's algorithm is unspecified.
    for (std::size_t i = n - 1; i > 0; --i) {
        std::uint64_t k = rng() % (i + 1);
        std::swap(order[i], order[k]);
    }
    std::vector<Eigen::Index> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<Eigen::Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {data.subset(train), data.subset(test)};
}

}  // namespace cfr
