#include "cldc/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace cldc::metrics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PerfMatrix PerfMatrix::make(int n_tasks) {
    if (n_tasks < 1) throw ConfigError("PerfMatrix needs at least one task");
    PerfMatrix m;
    m.n_tasks = n_tasks;
    m.p.assign(static_cast<std::size_t>(n_tasks + 1) * n_tasks, kNaN);
    return m;
}

double& PerfMatrix::at(int trained_after, int task) {
    if (trained_after < 0 || trained_after > n_tasks || task < 1 || task > n_tasks)
        throw ShapeError("PerfMatrix index out of range");
    return p[static_cast<std::size_t>(trained_after) * n_tasks + (task - 1)];
}

double PerfMatrix::at(int trained_after, int task) const {
    return const_cast<PerfMatrix*>(this)->at(trained_after, task);
}

bool PerfMatrix::has(int trained_after, int task) const {
    return !std::isnan(at(trained_after, task));
}

bool PerfMatrix::complete() const {
    for (double v : p)
        if (std::isnan(v)) return false;
    return true;
}

double continual_return(const PerfMatrix& P, int i) {
    if (i < 1 || i > P.n_tasks) throw ShapeError("continual_return: bad row");
    double sum = 0.0;
    for (int j = 1; j <= i; ++j) {
        if (!P.has(i, j)) throw DataError("continual_return: missing matrix entry");
        sum += P.at(i, j);
    }
    return sum / i;
}

TaskSeries forgetting(const PerfMatrix& P) {
    TaskSeries out;
    for (int i = 2; i <= P.n_tasks; ++i) {
        double sum = 0.0;
        for (int j = 1; j < i; ++j) {
            if (!P.has(i - 1, j) || !P.has(i, j))
                throw DataError("forgetting: missing matrix entry");
            sum += P.at(i - 1, j) - P.at(i, j);
        }
        out.values.push_back(sum / (i - 1));
        out.index.push_back(i);
    }
    if (out.values.empty()) {
        out.mean = kNaN;
    } else {
        double s = 0.0;
        for (double v : out.values) s += v;
        out.mean = s / static_cast<double>(out.values.size());
    }
    return out;
}

TaskSeries forward_transfer(const PerfMatrix& P) {
    TaskSeries out;
    for (int i = 1; i < P.n_tasks; ++i) {
        double sum = 0.0;
        for (int j = i + 1; j <= P.n_tasks; ++j) {
            if (!P.has(i, j) || !P.has(i - 1, j))
                throw DataError("forward_transfer: missing matrix entry");
            sum += P.at(i, j) - P.at(i - 1, j);
        }
        out.values.push_back(sum / (P.n_tasks - i));
        out.index.push_back(i);
    }
    if (out.values.empty()) {
        out.mean = kNaN;
    } else {
        double s = 0.0;
        for (double v : out.values) s += v;
        out.mean = s / static_cast<double>(out.values.size());
    }
    return out;
}

SeedMetrics compute_metrics(const PerfMatrix& P, std::uint64_t seed) {
    SeedMetrics m;
    m.seed = seed;
    for (int i = 1; i <= P.n_tasks; ++i) m.R.push_back(continual_return(P, i));
    m.R_final = m.R.back();
    m.F = forgetting(P);
    m.T = forward_transfer(P);
    return m;
}

Aggregate aggregate_scalar(const std::vector<double>& values) {
    Aggregate a;
    a.n = static_cast<int>(values.size());
    if (a.n == 0) {
        a.mean = a.sem = a.ci_lo = a.ci_hi = kNaN;
        return a;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / a.n;
    if (a.n == 1) {
        a.sem = 0.0;  // convention; consumers flag single-seed aggregates as n=1
        a.ci_lo = a.ci_hi = a.mean;
        return a;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    double sd = std::sqrt(ss / (a.n - 1));
    a.sem = sd / std::sqrt(static_cast<double>(a.n));
    double half = 1.96 * a.sem;  // normal-approximation 95% interval
    a.ci_lo = a.mean - half;
    a.ci_hi = a.mean + half;
    return a;
}

MetricReport aggregate(const std::vector<SeedMetrics>& per_seed) {
    if (per_seed.empty()) throw DataError("aggregate: no seeds");
    MetricReport rep;
    rep.per_seed = per_seed;
    std::vector<double> r, f, t;
    for (const SeedMetrics& m : per_seed) {
        r.push_back(m.R_final);
        if (!std::isnan(m.F.mean)) f.push_back(m.F.mean);
        if (!std::isnan(m.T.mean)) t.push_back(m.T.mean);
    }
    rep.R_final = aggregate_scalar(r);
    rep.F_mean = aggregate_scalar(f);
    rep.T_mean = aggregate_scalar(t);
    return rep;
}

PerfWriter::PerfWriter(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open " + path + " for writing");
    f_ = f;
    std::fprintf(f, "seed,trained_after_task,eval_task,mean_return\n");
    std::fflush(f);
}

PerfWriter::~PerfWriter() { close(); }

PerfWriter::PerfWriter(PerfWriter&& other) noexcept : f_(other.f_) { other.f_ = nullptr; }

PerfWriter& PerfWriter::operator=(PerfWriter&& other) noexcept {
    if (this != &other) {
        close();
        f_ = other.f_;
        other.f_ = nullptr;
    }
    return *this;
}

void PerfWriter::row(std::uint64_t seed, int trained_after, int task, double mean_return) {
    if (!f_) throw IoError("PerfWriter: writer is closed");
    std::fprintf(static_cast<std::FILE*>(f_), "%llu,%d,%d,%.17g\n",
                 static_cast<unsigned long long>(seed), trained_after, task, mean_return);
    std::fflush(static_cast<std::FILE*>(f_));  // keep partial artifacts usable after faults
}

void PerfWriter::close() {
    if (f_) {
        std::fclose(static_cast<std::FILE*>(f_));
        f_ = nullptr;
    }
}

std::map<std::uint64_t, PerfMatrix> load_perf_csv(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) throw IoError("cannot open " + path);
    char line[512];
    if (!std::fgets(line, sizeof line, f)) {
        std::fclose(f);
        throw IoError(path + ": empty file");
    }
    if (std::strncmp(line, "seed,trained_after_task,eval_task,mean_return", 45) != 0) {
        std::fclose(f);
        throw IoError(path + ": unexpected CSV header");
    }
    struct Row {
        std::uint64_t seed;
        int after;
        int task;
        double value;
    };
    std::vector<Row> rows;
    int max_task = 0;
    while (std::fgets(line, sizeof line, f)) {
        unsigned long long seed;
        int after, task;
        double value;
        if (std::sscanf(line, "%llu,%d,%d,%lf", &seed, &after, &task, &value) != 4) {
            std::fclose(f);
            throw IoError(path + ": malformed row: " + line);
        }
        rows.push_back({seed, after, task, value});
        if (task > max_task) max_task = task;
    }
    std::fclose(f);
    if (rows.empty()) throw IoError(path + ": no data rows");
    std::map<std::uint64_t, PerfMatrix> out;
    for (const Row& r : rows) {
        auto it = out.find(r.seed);
        if (it == out.end()) it = out.emplace(r.seed, PerfMatrix::make(max_task)).first;
        it->second.at(r.after, r.task) = r.value;
    }
    return out;
}

}  // namespace cldc::metrics
