#include "cldc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cldc::harness {

bool RunConfig::is_aacl_family() const {
    return method == "aacl" || method == "aacl_o" || method == "aacl_e" || method == "aacl_oe";
}

repr::RegMode RunConfig::reg_mode() const {
    if (method == "aacl") return repr::RegMode::DecoderOnly;
    if (method == "aacl_o") return repr::RegMode::None;
    if (method == "aacl_e") return repr::RegMode::Both;
    if (method == "aacl_oe") return repr::RegMode::EncoderOnly;
    throw ConfigError("method " + method + " has no regularization mode");
}

void RunConfig::validate() const {
    static const std::vector<std::string> methods{"aacl", "aacl_o",     "aacl_e",
                                                  "aacl_oe", "ind",     "ft",
                                                  "ewc",  "online_ewc", "replay_bc"};
    if (std::find(methods.begin(), methods.end(), method) == methods.end())
        throw ConfigError("unknown method tag: " + method);
    envs::family_from_tag(family);
    envs::situation_from_tag(situation);
    grid.validate();
    if (budgets.empty()) throw ConfigError("budgets must be resolved before validate");
    for (long b : budgets)
        if (b < 0) throw ConfigError("budgets must be >= 0");
    if (eval.interval < 1) throw ConfigError("eval.interval must be >= 1");
    if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (seeds.empty()) throw ConfigError("seed list must be nonempty");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (situation == "custom" && custom_action_sets.empty())
        throw ConfigError("custom situation requires custom_action_sets");
    if (situation != "custom" && !custom_action_sets.empty())
        throw ConfigError("custom_action_sets only valid with situation=custom");
}

namespace {

long default_budget(const std::string& family) {
    return family == "omni" ? 300000 : 150000;
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
    }
}

RunConfig config_from_json(const json& j) {
    reject_unknown(j, "config",
                   {"method", "family", "situation", "grid", "budgets", "eval", "seeds",
                    "out_dir", "jobs", "a2c", "repr", "baseline", "custom_action_sets",
                    "save_state", "dump_embeddings"});
    RunConfig c;
    read_field(j, "method", c.method);
    read_field(j, "family", c.family);
    read_field(j, "situation", c.situation);
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        reject_unknown(g, "grid", {"width", "height", "max_episode_steps", "obs_encoding"});
        read_field(g, "width", c.grid.width);
        read_field(g, "height", c.grid.height);
        read_field(g, "max_episode_steps", c.grid.max_episode_steps);
        read_field(g, "obs_encoding", c.grid.obs_encoding);
    }
    if (j.contains("budgets")) {
        const json& b = j.at("budgets");
        if (b.is_number()) {
            c.budgets = {b.get<long>()};
        } else {
            try {
                c.budgets = b.get<std::vector<long>>();
            } catch (const json::exception& e) {
                throw ConfigError(std::string("bad value for \"budgets\": ") + e.what());
            }
        }
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown(e, "eval", {"interval", "episodes"});
        read_field(e, "interval", c.eval.interval);
        read_field(e, "episodes", c.eval.episodes);
    }
    read_field(j, "seeds", c.seeds);
    read_field(j, "out_dir", c.out_dir);
    read_field(j, "jobs", c.jobs);
    if (j.contains("a2c")) {
        const json& a = j.at("a2c");
        reject_unknown(a, "a2c",
                       {"gamma", "rollout", "entropy_coef", "value_coef", "lr", "rmsprop_decay",
                        "eps", "grad_clip", "hidden", "prev_conditioning"});
        read_field(a, "gamma", c.a2c.gamma);
        read_field(a, "rollout", c.a2c.rollout);
        read_field(a, "entropy_coef", c.a2c.entropy_coef);
        read_field(a, "value_coef", c.a2c.value_coef);
        read_field(a, "lr", c.a2c.opt.lr);
        read_field(a, "rmsprop_decay", c.a2c.opt.decay);
        read_field(a, "eps", c.a2c.opt.eps);
        read_field(a, "grad_clip", c.a2c.opt.clip);
        read_field(a, "hidden", c.a2c.hidden);
        read_field(a, "prev_conditioning", c.a2c.prev_conditioning);
    }
    if (j.contains("repr")) {
        const json& r = j.at("repr");
        reject_unknown(r, "repr",
                       {"dim", "encoder_hidden", "head_sigmoid", "explore_steps", "ssl_epochs",
                        "ssl_batch", "ssl_lr", "lambda", "explore_with_previous_policy"});
        read_field(r, "dim", c.repr.repr_dim);
        read_field(r, "encoder_hidden", c.repr.encoder_hidden);
        read_field(r, "head_sigmoid", c.repr.head_sigmoid);
        read_field(r, "explore_steps", c.repr.explore_steps);
        read_field(r, "ssl_epochs", c.repr.ssl.epochs);
        read_field(r, "ssl_batch", c.repr.ssl.batch);
        read_field(r, "ssl_lr", c.repr.ssl.opt.lr);
        read_field(r, "lambda", c.repr.lambda);
        read_field(r, "explore_with_previous_policy", c.repr.explore_with_previous_policy);
    }
    if (j.contains("baseline")) {
        const json& b = j.at("baseline");
        reject_unknown(b, "baseline",
                       {"lambda_b", "online_lambda", "online_decay", "fisher_buffer",
                        "replay_capacity", "bc_weight", "bc_batch"});
        read_field(b, "lambda_b", c.baseline.lambda_b);
        read_field(b, "online_lambda", c.baseline.online_lambda);
        read_field(b, "online_decay", c.baseline.online_decay);
        read_field(b, "fisher_buffer", c.baseline.fisher_buffer);
        read_field(b, "replay_capacity", c.baseline.replay_capacity);
        read_field(b, "bc_weight", c.baseline.bc_weight);
        read_field(b, "bc_batch", c.baseline.bc_batch);
    }
    read_field(j, "custom_action_sets", c.custom_action_sets);
    read_field(j, "save_state", c.save_state);
    read_field(j, "dump_embeddings", c.dump_embeddings);

    if (c.budgets.empty()) c.budgets = {default_budget(c.family)};
    if (c.is_aacl_family()) c.repr.mode = c.reg_mode();
    c.baseline.a2c = c.a2c;
    c.validate();
    // broadcast budgets to the task count so the resolved config is explicit
    envs::SequenceSpec probe_seq = make_sequence(c);
    if (c.budgets.size() == 1)
        c.budgets.assign(static_cast<std::size_t>(probe_seq.size()), c.budgets[0]);
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["method"] = c.method;
    j["family"] = c.family;
    j["situation"] = c.situation;
    j["grid"] = {{"width", c.grid.width},
                 {"height", c.grid.height},
                 {"max_episode_steps", c.grid.max_episode_steps},
                 {"obs_encoding", c.grid.obs_encoding}};
    j["budgets"] = c.budgets;
    j["eval"] = {{"interval", c.eval.interval}, {"episodes", c.eval.episodes}};
    j["seeds"] = c.seeds;
    j["out_dir"] = c.out_dir;
    j["jobs"] = c.jobs;
    j["a2c"] = {{"gamma", c.a2c.gamma},
                {"rollout", c.a2c.rollout},
                {"entropy_coef", c.a2c.entropy_coef},
                {"value_coef", c.a2c.value_coef},
                {"lr", c.a2c.opt.lr},
                {"rmsprop_decay", c.a2c.opt.decay},
                {"eps", c.a2c.opt.eps},
                {"grad_clip", c.a2c.opt.clip},
                {"hidden", c.a2c.hidden},
                {"prev_conditioning", c.a2c.prev_conditioning}};
    j["repr"] = {{"dim", c.repr.repr_dim},
                 {"encoder_hidden", c.repr.encoder_hidden},
                 {"head_sigmoid", c.repr.head_sigmoid},
                 {"explore_steps", c.repr.explore_steps},
                 {"ssl_epochs", c.repr.ssl.epochs},
                 {"ssl_batch", c.repr.ssl.batch},
                 {"ssl_lr", c.repr.ssl.opt.lr},
                 {"lambda", c.repr.lambda},
                 {"explore_with_previous_policy", c.repr.explore_with_previous_policy}};
    j["baseline"] = {{"lambda_b", c.baseline.lambda_b},
                     {"online_lambda", c.baseline.online_lambda},
                     {"online_decay", c.baseline.online_decay},
                     {"fisher_buffer", c.baseline.fisher_buffer},
                     {"replay_capacity", c.baseline.replay_capacity},
                     {"bc_weight", c.baseline.bc_weight},
                     {"bc_batch", c.baseline.bc_batch}};
    if (!c.custom_action_sets.empty()) j["custom_action_sets"] = c.custom_action_sets;
    j["save_state"] = c.save_state;
    j["dump_embeddings"] = c.dump_embeddings;
    return j;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f << content;
        if (!f.good()) throw IoError("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

RunConfig parse_config_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

std::string resolved_config_text(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not valid JSON: " + std::string(e.what()));
    }
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must look like key.path=value: " + ov);
        std::string path_part = ov.substr(0, eq);
        std::string value_part = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(value_part);
        } catch (const json::exception&) {
            value = value_part;  // unquoted strings arrive as-is
        }
        json* node = &j;
        std::size_t start = 0;
        for (;;) {
            std::size_t dot = path_part.find('.', start);
            std::string key = path_part.substr(start, dot - start);
            if (key.empty()) throw ConfigError("bad override path: " + path_part);
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }
    return config_from_json(j);
}

envs::SequenceSpec make_sequence(const RunConfig& c) {
    envs::Family fam = envs::family_from_tag(c.family);
    envs::Situation sit = envs::situation_from_tag(c.situation);
    std::uint64_t seq_seed = c.seeds.front();
    if (sit == envs::Situation::Custom)
        return envs::build_custom_sequence(fam, c.grid, c.custom_action_sets, c.budgets,
                                           seq_seed);
    return envs::build_sequence(sit, fam, c.grid, c.budgets, seq_seed);
}

std::string resolve_out_dir(const std::string& configured) {
    const char* root = std::getenv("CLDC_OUT");
    if (root && root[0] != '\0' && !fs::path(configured).is_absolute())
        return (fs::path(root) / configured).string();
    return configured;
}

namespace {

// ---- encoder/decoder snapshot (for the probe tool) ----

const char* act_tag(numerics::Activation a) {
    switch (a) {
        case numerics::Activation::Linear: return "linear";
        case numerics::Activation::Relu: return "relu";
        case numerics::Activation::Sigmoid: return "sigmoid";
    }
    return "linear";
}

numerics::Activation act_from_tag(const std::string& t) {
    if (t == "linear") return numerics::Activation::Linear;
    if (t == "relu") return numerics::Activation::Relu;
    if (t == "sigmoid") return numerics::Activation::Sigmoid;
    throw IoError("unknown activation tag in snapshot: " + t);
}

json params_to_json(const numerics::ParamBundle& p) {
    json layers = json::array();
    for (const auto& l : p.layers)
        layers.push_back({{"in", l.in},
                          {"out", l.out},
                          {"act", act_tag(l.act)},
                          {"w", l.w},
                          {"b", l.b}});
    return layers;
}

numerics::ParamBundle params_from_json(const json& j) {
    numerics::ParamBundle p;
    for (const json& lj : j) {
        numerics::Layer l;
        l.in = lj.at("in").get<std::size_t>();
        l.out = lj.at("out").get<std::size_t>();
        l.act = act_from_tag(lj.at("act").get<std::string>());
        l.w = lj.at("w").get<std::vector<double>>();
        l.b = lj.at("b").get<std::vector<double>>();
        p.layers.push_back(std::move(l));
    }
    p.validate();
    return p;
}

void save_encdec(const repr::EncoderDecoderState& st, const std::string& path) {
    json j;
    j["obs_len"] = st.obs_len;
    j["repr_dim"] = st.repr_dim;
    j["seen"] = st.seen;
    j["row_of"] = st.row_of;
    j["catalog_of"] = st.catalog_of;
    j["encoder"] = params_to_json(st.encoder);
    j["decoder"] = params_to_json(st.decoder);
    write_file_atomic(path, j.dump() + "\n");
}

repr::EncoderDecoderState load_encdec(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError(path + ": bad snapshot: " + std::string(e.what()));
    }
    repr::EncoderDecoderState st;
    st.obs_len = j.at("obs_len").get<std::size_t>();
    st.repr_dim = j.at("repr_dim").get<int>();
    st.seen = j.at("seen").get<std::vector<std::uint8_t>>();
    st.row_of = j.at("row_of").get<std::vector<int>>();
    st.catalog_of = j.at("catalog_of").get<std::vector<int>>();
    st.encoder = params_from_json(j.at("encoder"));
    if (!j.at("decoder").empty()) st.decoder = params_from_json(j.at("decoder"));
    return st;
}

// ---- training log ----

class JsonlWriter {
public:
    JsonlWriter() = default;
    explicit JsonlWriter(const std::string& path) {
        f_ = std::fopen(path.c_str(), "w");
        if (!f_) throw IoError("cannot open " + path + " for writing");
    }
    JsonlWriter(const JsonlWriter&) = delete;
    JsonlWriter& operator=(const JsonlWriter&) = delete;
    JsonlWriter(JsonlWriter&& o) noexcept : f_(o.f_) { o.f_ = nullptr; }
    JsonlWriter& operator=(JsonlWriter&& o) noexcept {
        if (this != &o) {
            close();
            f_ = o.f_;
            o.f_ = nullptr;
        }
        return *this;
    }
    ~JsonlWriter() { close(); }
    void write(const json& record) {
        if (!f_) throw IoError("JsonlWriter: closed");
        std::string line = record.dump();
        std::fprintf(f_, "%s\n", line.c_str());
        std::fflush(f_);
    }
    void close() {
        if (f_) {
            std::fclose(f_);
            f_ = nullptr;
        }
    }

private:
    std::FILE* f_ = nullptr;
};

std::uint64_t eval_sweep_seed(std::uint64_t run_seed, long global_step, int task) {
    std::uint64_t sweep = rng::derive(run_seed, "eval", static_cast<std::uint64_t>(global_step));
    return rng::derive(sweep, "task", static_cast<std::uint64_t>(task));
}

struct SeedFiles {
    metrics::PerfWriter perf;
    JsonlWriter log;
    std::string perf_final, log_final;
    std::string perf_partial, log_partial;

    explicit SeedFiles(const std::string& seed_dir) {
        fs::create_directories(seed_dir);
        perf_final = (fs::path(seed_dir) / "perf_matrix.csv").string();
        log_final = (fs::path(seed_dir) / "train_log.jsonl").string();
        perf_partial = perf_final + ".partial";
        log_partial = log_final + ".partial";
        perf = metrics::PerfWriter(perf_partial);
        log = JsonlWriter(log_partial);
    }
    /// Promote flushed partials to their final names. A final-named file is
    /// always complete; after a fault the .partial files stay behind instead.
    void finalize(bool promote) {
        perf.close();
        log.close();
        if (promote) {
            fs::rename(perf_partial, perf_final);
            fs::rename(log_partial, log_final);
        }
    }
};

json episode_record(const agent::EpisodeEvent& ev) {
    return json{{"global_step", ev.global_step},
                {"task_index", ev.task_index},
                {"episode_return", ev.episode_return},
                {"policy_loss", ev.diag.policy_loss},
                {"value_loss", ev.diag.value_loss},
                {"entropy", ev.diag.entropy}};
}

}  // namespace

metrics::PerfMatrix run_one_seed(const RunConfig& cfg, const envs::SequenceSpec& seq,
                                 std::uint64_t seed, const std::string& seed_dir,
                                 bool save_state) {
    auto matrix = metrics::PerfMatrix::make(seq.size());
    SeedFiles files(seed_dir);
    bool fault = false;
    std::string fault_msg;
    try {
        if (cfg.is_aacl_family()) {
            rng::Stream init_rng(rng::derive(seed, "init"));
            agent::ReprSettings rs = cfg.repr;
            rs.mode = cfg.reg_mode();
            agent::AgentBundle bundle = agent::make_agent(seq.tasks.front(), cfg.a2c, rs,
                                                          init_rng);
            auto sweep = [&](int after, long gstep, bool boundary) {
                for (int j = 1; j <= seq.size(); ++j) {
                    double r = agent::evaluate(bundle.policy, bundle.encdec,
                                               seq.tasks[static_cast<std::size_t>(j - 1)],
                                               cfg.eval.episodes,
                                               eval_sweep_seed(seed, gstep, j), cfg.a2c);
                    files.perf.row(seed, after, j, r);
                    if (boundary) matrix.at(after, j) = r;
                }
            };
            sweep(0, 0, true);
            long gstep = 0;
            for (const envs::TaskSpec& task : seq.tasks) {
                agent::TaskHooks hooks;
                hooks.at_eval_point = [&](long, long gs) { sweep(task.index, gs, false); };
                hooks.on_episode = [&](const agent::EpisodeEvent& ev) {
                    files.log.write(episode_record(ev));
                };
                gstep += agent::run_task(bundle, task, seed, gstep, cfg.eval.interval, hooks);
                sweep(task.index, gstep, true);
                if (save_state)
                    save_encdec(bundle.encdec,
                                (fs::path(seed_dir) /
                                 ("encdec_task" + std::to_string(task.index) + ".json"))
                                    .string());
            }
            if (cfg.dump_embeddings && save_state) {
                const envs::TaskSpec& last = seq.tasks.back();
                auto probe = repr::collect_transitions(last, cfg.repr.explore_steps,
                                                       rng::derive(seed, "embed"));
                repr::dump_embeddings(bundle.encdec, probe,
                                      (fs::path(seed_dir) / "embeddings.csv").string());
            }
        } else {
            baselines::Kind kind = baselines::kind_from_tag(cfg.method);
            rng::Stream init_rng(rng::derive(seed, "init"));
            baselines::DirectPolicyState ps = baselines::make_direct_policy(
                envs::obs_dim(seq.tasks.front()),
                seq.tasks.front().actions.catalog_size(), cfg.a2c, init_rng);
            baselines::SequenceHooks hooks;
            hooks.at_eval_point = [&](int after, long gstep, bool boundary) {
                for (int j = 1; j <= seq.size(); ++j) {
                    double r = baselines::evaluate_direct(
                        ps, seq.tasks[static_cast<std::size_t>(j - 1)], cfg.eval.episodes,
                        eval_sweep_seed(seed, gstep, j));
                    files.perf.row(seed, after, j, r);
                    if (boundary) matrix.at(after, j) = r;
                }
            };
            hooks.on_episode = [&](const agent::EpisodeEvent& ev) {
                files.log.write(episode_record(ev));
            };
            baselines::BaselineConfig bcfg = cfg.baseline;
            bcfg.a2c = cfg.a2c;
            baselines::run_sequence_baseline(kind, ps, seq, bcfg, seed, cfg.eval.interval,
                                             hooks);
        }
    } catch (const NumericFault& e) {
        fault = true;
        fault_msg = e.what();
    }
    files.finalize(!fault);
    if (fault) throw NumericFault(fault_msg);
    return matrix;
}

namespace {

metrics::MetricReport report_from_seed_dirs(const RunConfig& cfg, const std::string& run_dir) {
    std::vector<metrics::SeedMetrics> per_seed;
    for (std::uint64_t s : cfg.seeds) {
        std::string csv =
            (fs::path(run_dir) / ("seed_" + std::to_string(s)) / "perf_matrix.csv").string();
        auto matrices = metrics::load_perf_csv(csv);
        auto it = matrices.find(s);
        if (it == matrices.end()) throw IoError(csv + ": no rows for seed " + std::to_string(s));
        per_seed.push_back(metrics::compute_metrics(it->second, s));
    }
    return metrics::aggregate(per_seed);
}

json aggregate_to_json(const metrics::Aggregate& a) {
    return json{{"n", a.n},     {"mean", a.mean},     {"sem", a.sem},
                {"ci_lo", a.ci_lo}, {"ci_hi", a.ci_hi}};
}

json report_to_json(const metrics::MetricReport& rep, const RunConfig& cfg) {
    json j;
    j["method"] = cfg.method;
    j["family"] = cfg.family;
    j["situation"] = cfg.situation;
    j["n_seeds"] = static_cast<int>(cfg.seeds.size());
    j["note"] = "matrix entries are task-boundary evaluations; row 0 is the pre-training "
                "evaluation used by forward transfer; intervals are mean +- 1.96*SEM";
    j["continual_return_final"] = aggregate_to_json(rep.R_final);
    j["forgetting"] = aggregate_to_json(rep.F_mean);
    j["forward_transfer"] = aggregate_to_json(rep.T_mean);
    json seeds = json::array();
    for (const auto& m : rep.per_seed) {
        json sj;
        sj["seed"] = m.seed;
        sj["R"] = m.R;
        sj["R_final"] = m.R_final;
        sj["F_values"] = m.F.values;
        sj["F_mean"] = m.F.mean;
        sj["T_values"] = m.T.values;
        sj["T_mean"] = m.T.mean;
        seeds.push_back(std::move(sj));
    }
    j["per_seed"] = std::move(seeds);
    return j;
}

void merge_seed_csvs(const RunConfig& cfg, const std::string& run_dir) {
    std::string merged = "seed,trained_after_task,eval_task,mean_return\n";
    for (std::uint64_t s : cfg.seeds) {
        std::string csv =
            (fs::path(run_dir) / ("seed_" + std::to_string(s)) / "perf_matrix.csv").string();
        std::string text = read_file(csv);
        auto nl = text.find('\n');
        if (nl != std::string::npos) merged += text.substr(nl + 1);
    }
    write_file_atomic((fs::path(run_dir) / "perf_matrix.csv").string(), merged);
}

}  // namespace

int cli_run(const std::string& config_path, const std::vector<std::string>& overrides,
            int jobs_override) {
    try {
        RunConfig cfg = load_config(config_path, overrides);
        if (jobs_override > 0) cfg.jobs = jobs_override;
        envs::SequenceSpec seq = make_sequence(cfg);
        std::string run_dir = resolve_out_dir(cfg.out_dir);
        fs::create_directories(run_dir);
        write_file_atomic((fs::path(run_dir) / "config_resolved.json").string(),
                          resolved_config_text(cfg));

        bool numeric_fault = false;
        std::string fault_msg;
        std::size_t next = 0;
        std::mutex mu;
        auto worker = [&]() {
            for (;;) {
                std::size_t idx;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= cfg.seeds.size() || numeric_fault) return;
                    idx = next++;
                }
                std::uint64_t s = cfg.seeds[idx];
                std::string seed_dir =
                    (fs::path(run_dir) / ("seed_" + std::to_string(s))).string();
                try {
                    run_one_seed(cfg, seq, s, seed_dir, idx == 0 && cfg.save_state);
                } catch (const NumericFault& e) {
                    std::lock_guard<std::mutex> lock(mu);
                    numeric_fault = true;
                    fault_msg = e.what();
                }
            }
        };
        int n_threads = std::min<int>(cfg.jobs, static_cast<int>(cfg.seeds.size()));
        if (n_threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (numeric_fault) {
            std::fprintf(stderr, "numeric fault during training: %s\n", fault_msg.c_str());
            std::fprintf(stderr, "partial artifacts kept under %s\n", run_dir.c_str());
            return 3;
        }
        merge_seed_csvs(cfg, run_dir);
        metrics::MetricReport rep = report_from_seed_dirs(cfg, run_dir);
        write_file_atomic((fs::path(run_dir) / "metric_report.json").string(),
                          report_to_json(rep, cfg).dump(2) + "\n");
        std::printf("%s %s/%s: R=%.4f F=%.4f T=%.4f (%d seeds) -> %s\n", cfg.method.c_str(),
                    cfg.family.c_str(), cfg.situation.c_str(), rep.R_final.mean,
                    rep.F_mean.mean, rep.T_mean.mean, rep.R_final.n, run_dir.c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericFault& e) {
        std::fprintf(stderr, "numeric fault: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

namespace {

std::string fmt_pm(const metrics::Aggregate& a, bool not_applicable) {
    char buf[96];
    if (not_applicable || std::isnan(a.mean)) return "--";
    if (a.n < 2) {
        std::snprintf(buf, sizeof buf, "%.3f (n=1)", a.mean);
    } else {
        std::snprintf(buf, sizeof buf, "%.3f +- %.3f", a.mean, 1.96 * a.sem);
    }
    return buf;
}

}  // namespace

int cli_report(const std::string& runs_dir) {
    try {
        struct Entry {
            std::string name;
            RunConfig cfg;
            metrics::MetricReport rep;
        };
        std::vector<Entry> entries;
        std::vector<std::string> dirs;
        for (const auto& de : fs::directory_iterator(runs_dir))
            if (de.is_directory() && fs::exists(de.path() / "config_resolved.json"))
                dirs.push_back(de.path().string());
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw ConfigError("no run directories under " + runs_dir);
        for (const std::string& d : dirs) {
            Entry e;
            e.name = fs::path(d).filename().string();
            e.cfg = parse_config_text(read_file((fs::path(d) / "config_resolved.json").string()));
            e.rep = report_from_seed_dirs(e.cfg, d);
            entries.push_back(std::move(e));
        }
        // all runs must describe the same sequence for the table to compare
        std::vector<std::string> offending;
        for (const Entry& e : entries)
            if (e.cfg.family != entries.front().cfg.family ||
                e.cfg.situation != entries.front().cfg.situation ||
                e.cfg.budgets.size() != entries.front().cfg.budgets.size())
                offending.push_back(e.name);
        if (!offending.empty()) {
            std::string msg = "runs describe incompatible sequences:";
            for (const auto& n : offending) msg += " " + n;
            throw ConfigError(msg);
        }

        std::string csv = "run,method,family,situation,n_seeds,return_mean,return_sem,"
                          "forgetting_mean,forgetting_sem,transfer_mean,transfer_sem\n";
        std::printf("%-24s %-10s %-18s %-18s %-18s\n", "run", "method", "return", "forgetting",
                    "transfer");
        for (const Entry& e : entries) {
            bool ind = e.cfg.method == "ind";
            std::printf("%-24s %-10s %-18s %-18s %-18s\n", e.name.c_str(),
                        e.cfg.method.c_str(), fmt_pm(e.rep.R_final, false).c_str(),
                        fmt_pm(e.rep.F_mean, false).c_str(), fmt_pm(e.rep.T_mean, ind).c_str());
            char line[512];
            std::snprintf(line, sizeof line, "%s,%s,%s,%s,%d,%.6f,%.6f,%.6f,%.6f,",
                          e.name.c_str(), e.cfg.method.c_str(), e.cfg.family.c_str(),
                          e.cfg.situation.c_str(), e.rep.R_final.n, e.rep.R_final.mean,
                          e.rep.R_final.sem, e.rep.F_mean.mean, e.rep.F_mean.sem);
            csv += line;
            if (ind) {
                csv += ",";
            } else {
                std::snprintf(line, sizeof line, "%.6f,%.6f", e.rep.T_mean.mean,
                              e.rep.T_mean.sem);
                csv += line;
            }
            csv += "\n";
        }
        write_file_atomic((fs::path(runs_dir) / "report.csv").string(), csv);
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

int cli_probe(const std::string& run_dir, int task_index) {
    try {
        std::string cfg_path = (fs::path(run_dir) / "config_resolved.json").string();
        if (!fs::exists(cfg_path)) throw ConfigError("no config_resolved.json in " + run_dir);
        RunConfig cfg = parse_config_text(read_file(cfg_path));
        if (!cfg.is_aacl_family())
            throw ConfigError("probe requires a run with a learned encoder/decoder");
        envs::SequenceSpec seq = make_sequence(cfg);
        if (task_index < 1 || task_index > seq.size())
            throw ConfigError("task index out of range 1.." + std::to_string(seq.size()));
        const envs::TaskSpec& task = seq.tasks[static_cast<std::size_t>(task_index - 1)];
        std::uint64_t seed = cfg.seeds.front();
        std::string snap = (fs::path(run_dir) / ("seed_" + std::to_string(seed)) /
                            ("encdec_task" + std::to_string(task_index) + ".json"))
                               .string();
        if (!fs::exists(snap)) throw ConfigError("missing saved state: " + snap);
        repr::EncoderDecoderState st = load_encdec(snap);

        // fresh probe rollouts, keeping grid states for the ambiguity check
        struct Sample {
            envs::GridState before;
            repr::Transition tr;
        };
        std::vector<Sample> samples;
        long want = cfg.repr.explore_steps;
        if (want < 1) throw ConfigError("probe buffer would be empty");
        rng::Stream episodes(rng::derive(seed, "probe_episodes", task_index));
        rng::Stream actions(rng::derive(seed, "probe_actions", task_index));
        auto active = task.actions.active_indices();
        auto cur = envs::env_reset(task, episodes.next_u64());
        while (static_cast<long>(samples.size()) < want) {
            int a = active[actions.uniform_index(active.size())];
            auto res = envs::env_step(cur.state, a, task);
            samples.push_back({cur.state, {cur.observation, res.observation, a}});
            if (res.done) {
                cur = envs::env_reset(task, episodes.next_u64());
            } else {
                cur.state = res.state;
                cur.observation = std::move(res.observation);
            }
        }

        long correct = 0, unambiguous = 0, unambiguous_correct = 0;
        std::vector<repr::Transition> buffer;
        buffer.reserve(samples.size());
        for (const Sample& smp : samples) {
            auto e = repr::encode(st, smp.tr.s, smp.tr.s_next);
            auto probs = repr::decode(st, e, task.actions.active);
            int pred = 0;
            for (int k = 1; k < static_cast<int>(probs.size()); ++k)
                if (probs[static_cast<std::size_t>(k)] > probs[static_cast<std::size_t>(pred)])
                    pred = k;
            bool ok = pred == smp.tr.action;
            correct += ok ? 1 : 0;
            int producers = 0;
            for (int a : active)
                if (envs::env_step(smp.before, a, task).observation == smp.tr.s_next)
                    ++producers;
            if (producers == 1) {
                ++unambiguous;
                unambiguous_correct += ok ? 1 : 0;
            }
            buffer.push_back(smp.tr);
        }
        std::string emb_path =
            (fs::path(run_dir) / ("embeddings_probe_task" + std::to_string(task_index) + ".csv"))
                .string();
        repr::dump_embeddings(st, buffer, emb_path);
        json out;
        out["task"] = task_index;
        out["transitions"] = static_cast<long>(samples.size());
        out["overall"] = static_cast<double>(correct) / static_cast<double>(samples.size());
        out["unambiguous_count"] = unambiguous;
        out["unambiguous_only"] =
            unambiguous > 0
                ? static_cast<double>(unambiguous_correct) / static_cast<double>(unambiguous)
                : std::numeric_limits<double>::quiet_NaN();
        out["embeddings_csv"] = emb_path;
        std::string text = out.dump(2) + "\n";
        write_file_atomic(
            (fs::path(run_dir) / ("probe_task" + std::to_string(task_index) + ".json")).string(),
            text);
        std::printf("%s", text.c_str());
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace cldc::harness
