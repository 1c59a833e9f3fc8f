#include "orthoboot/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace orthoboot {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems)
{
    std::string out = "invalid config:";
    for (const auto& p : problems) out += "\n  " + p;
    return out;
}

json toml_to_json(const toml::node& node)
{
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        for (const auto& v : *a) out.push_back(toml_to_json(v));
        return out;
    }
    if (const auto* v = node.as_integer()) return v->get();
    if (const auto* v = node.as_floating_point()) return v->get();
    if (const auto* v = node.as_boolean()) return v->get();
    if (const auto* v = node.as_string()) return v->get();
    throw std::invalid_argument("unsupported TOML value (dates and times are not accepted)");
}

// Typed reads that record problems instead of throwing.
class Reader {
public:
    Reader(const json& table, std::vector<std::string>& problems) : table_(table), problems_(problems) {}

    bool has(const std::string& key) const { return table_.contains(key); }

    template <typename T>
    std::optional<T> get(const std::string& key)
    {
        seen_.insert(key);
        if (!has(key)) return std::nullopt;
        try {
            return table_.at(key).get<T>();
        } catch (const json::exception&) {
            problems_.push_back("'" + key + "' has the wrong type");
            return std::nullopt;
        }
    }

    // Accepts a scalar or a list.
    std::vector<Eigen::Index> index_list(const std::string& key)
    {
        seen_.insert(key);
        if (!has(key)) return {};
        const json& v = table_.at(key);
        std::vector<Eigen::Index> out;
        if (v.is_number_integer()) {
            out.push_back(v.get<Eigen::Index>());
        } else if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); })) {
            for (const auto& e : v) out.push_back(e.get<Eigen::Index>());
        } else {
            problems_.push_back("'" + key + "' must be an integer or a list of integers");
        }
        return out;
    }

    void reject_unknown(const std::string& where)
    {
        for (const auto& item : table_.items())
            if (!seen_.count(item.key())) problems_.push_back("unknown key '" + where + item.key() + "'");
    }

    void mark(const std::string& key) { seen_.insert(key); }

private:
    const json& table_;
    std::vector<std::string>& problems_;
    std::set<std::string> seen_;
};

std::optional<RunKind> parse_kind(const std::string& s)
{
    for (RunKind k : {RunKind::coverage, RunKind::debias, RunKind::scaling, RunKind::pi, RunKind::estimate})
        if (s == run_kind_name(k)) return k;
    return std::nullopt;
}

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

json echo(const RunConfig& c, json body)
{
    body["config"] = c.source;
    body["seed"] = c.seed;
    body["version"] = ORTHOBOOT_VERSION;
    body["rng"] = kRngName;
    return body;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems))
{
}

const char* run_kind_name(RunKind k) noexcept
{
    switch (k) {
    case RunKind::coverage: return "coverage";
    case RunKind::debias: return "debias";
    case RunKind::scaling: return "scaling";
    case RunKind::pi: return "pi";
    case RunKind::estimate: return "estimate";
    }
    return "?";
}

json read_config_table(const fs::path& path)
{
    if (!fs::exists(path)) throw ConfigError({"config file not found: " + path.string()});
    if (path.extension() == ".json") {
        std::ifstream in(path);
        try {
            return json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError({path.string() + ": " + e.what()});
        }
    }
    try {
        const toml::table table = toml::parse_file(path.string());
        return toml_to_json(table);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
        throw ConfigError({msg.str()});
    } catch (const std::invalid_argument& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
}

RunConfig parse_config(const json& input, const fs::path& base_dir, bool full)
{
    std::vector<std::string> problems;
    if (!input.is_object()) throw ConfigError({"config must be a table"});

    json table = input;
    if (table.contains("ci")) {
        if (!table["ci"].is_object()) {
            problems.push_back("'ci' must be a table");
        } else if (!full) {
            for (const auto& item : table["ci"].items()) table[item.key()] = item.value();
        }
        table.erase("ci");
    }

    RunConfig c;
    c.source = table;
    Reader r(table, problems);

    const auto kind = r.get<std::string>("kind");
    if (!kind) {
        if (!r.has("kind")) problems.push_back("missing 'kind' (coverage, debias, scaling, pi, estimate)");
    } else if (auto k = parse_kind(*kind)) {
        c.kind = *k;
    } else {
        problems.push_back("unknown kind '" + *kind + "' (coverage, debias, scaling, pi, estimate)");
    }

    if (auto v = r.get<std::int64_t>("seed")) {
        if (*v < 0) problems.push_back("'seed' must be non-negative");
        else c.seed = static_cast<std::uint64_t>(*v);
    }
    if (auto v = r.get<double>("alpha")) c.alpha = *v;
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) problems.push_back("'alpha' must lie in (0, 1)");

    c.n = r.index_list("n");
    c.B = r.index_list("B");
    for (auto n : c.n)
        if (n < 2) problems.push_back("'n' values must be at least 2");
    for (auto b : c.B)
        if (b < 1) problems.push_back("'B' values must be at least 1");
    auto positive = [&](const char* key, Eigen::Index& slot) {
        if (auto v = r.get<Eigen::Index>(key)) {
            if (*v < 1) problems.push_back(std::string("'") + key + "' must be positive");
            else slot = *v;
        }
    };
    positive("R", c.R);
    positive("repeats", c.repeats);
    positive("seeds", c.seeds);
    positive("n_test", c.n_test);

    if (auto ms = r.get<std::vector<std::string>>("methods")) {
        for (const auto& m : *ms) {
            try {
                c.methods.push_back(parse_method(m));
            } catch (const std::exception& e) {
                problems.push_back(e.what());
            }
        }
    }
    if (auto in = r.get<std::vector<std::string>>("inputs")) {
        for (const auto& p : *in) {
            fs::path path(p);
            c.inputs.push_back(path.is_absolute() ? path : base_dir / path);
        }
    }

    auto section = [&](const char* key, std::string& name, json& params) {
        r.mark(key);
        if (!table.contains(key)) return;
        const json& t = table[key];
        if (!t.is_object()) {
            problems.push_back(std::string("'") + key + "' must be a table");
            return;
        }
        Reader s(t, problems);
        if (auto v = s.get<std::string>("name")) name = *v;
        else if (!t.contains("name")) problems.push_back(std::string("'") + key + ".name' is required");
        if (auto v = s.get<json>("params")) {
            if (v->is_object()) params = *v;
            else problems.push_back(std::string("'") + key + ".params' must be a table");
        }
        s.reject_unknown(std::string(key) + ".");
    };
    section("generator", c.generator, c.generator_params);
    section("functional", c.functional, c.functional_params);

    r.mark("model");
    if (table.contains("model")) {
        Reader s(table["model"], problems);
        if (auto v = s.get<bool>("intercept")) c.model.intercept = *v;
        if (auto v = s.get<double>("ridge")) c.model.ridge = *v;
        if (c.model.ridge < 0) problems.push_back("'model.ridge' must be non-negative");
        s.reject_unknown("model.");
    }
    r.mark("output");
    if (table.contains("output")) {
        Reader s(table["output"], problems);
        if (auto v = s.get<std::string>("dir")) c.out_dir = *v;
        if (auto v = s.get<std::string>("prefix")) c.prefix = *v;
        s.reject_unknown("output.");
    }
    r.reject_unknown("");

    // Per-kind requirements.
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) problems.push_back(std::string(run_kind_name(c.kind)) + ": " + what);
    };
    const bool sim = c.kind != RunKind::estimate;
    if (sim) need(!c.generator.empty(), "requires [generator]");
    if (c.kind != RunKind::pi) need(!c.functional.empty(), "requires [functional]");
    switch (c.kind) {
    case RunKind::coverage:
        need(c.n.size() == 1, "'n' must be a single value");
        need(!c.B.empty(), "requires 'B'");
        need(c.R > 0, "requires 'R'");
        break;
    case RunKind::debias:
        need(c.n.size() == 1, "'n' must be a single value");
        need(!c.B.empty(), "requires 'B'");
        need(c.R > 0, "requires 'R'");
        break;
    case RunKind::scaling:
        need(c.n.size() >= 2, "'n' must list at least two sizes");
        need(c.B.size() == 1 && c.B[0] >= 2, "'B' must be a single value of at least 2");
        need(c.seeds >= 2, "'seeds' must be at least 2");
        break;
    case RunKind::pi:
        need(c.n.size() == 1, "'n' must be a single value");
        need(c.B.size() == 1 && c.B[0] >= 2, "'B' must be a single value of at least 2");
        need(c.n_test > 0, "requires 'n_test'");
        break;
    case RunKind::estimate:
        need(!c.inputs.empty(), "requires 'inputs'");
        need(c.B.size() <= 1, "'B' must be a single value");
        for (const auto& p : c.inputs)
            if (!fs::exists(p)) problems.push_back("input not found: " + p.string());
        break;
    }

    // Catch bad generator/functional names and parameters now rather than mid-run.
    if (problems.empty() && sim) {
        try {
            make_scenario(c.generator, c.generator_params, c.kind == RunKind::pi ? "" : c.functional,
                          c.functional_params);
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    } else if (problems.empty()) {
        try {
            json params = c.functional_params;
            params.erase("component");
            FunctionalRegistry::builtin().make(c.functional, params);
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    }

    if (!problems.empty()) throw ConfigError(std::move(problems));
    return c;
}

RunConfig load_config(const fs::path& path, bool full)
{
    return parse_config(read_config_table(path), path.parent_path(), full);
}

std::vector<fs::path> run_config(RunConfig c, const RunOptions& options)
{
    if (options.seed) {
        c.seed = *options.seed;
        c.source["seed"] = c.seed;
    }
    if (options.out_dir) c.out_dir = *options.out_dir;
    fs::create_directories(c.out_dir);
    const std::string stem = c.prefix + run_kind_name(c.kind);
    const fs::path csv = c.out_dir / (stem + ".csv");
    const fs::path summary = c.out_dir / (stem + "_summary.csv");
    const fs::path js = c.out_dir / (stem + ".json");

    std::vector<fs::path> written;
    auto emit = [&](const fs::path& p, const std::string& text) {
        write_file(p, text);
        written.push_back(p);
    };

    switch (c.kind) {
    case RunKind::coverage: {
        const Scenario sc = make_scenario(c.generator, c.generator_params, c.functional, c.functional_params);
        CoverageSettings s;
        s.n = c.n[0];
        s.B = c.B;
        if (!c.methods.empty()) s.methods = c.methods;
        s.R = c.R;
        s.alpha = c.alpha;
        s.seed = c.seed;
        s.exec = options.exec;
        const CoverageReport rep = run_coverage(sc, s);
        emit(csv, coverage_csv(rep));
        emit(summary, coverage_summary_csv(rep));
        emit(js, echo(c, coverage_json(rep)).dump(2) + "\n");
        break;
    }
    case RunKind::debias: {
        const Scenario sc = make_scenario(c.generator, c.generator_params, c.functional, c.functional_params);
        DebiasSettings s;
        s.n = c.n[0];
        s.B = c.B;
        if (!c.methods.empty()) s.methods = c.methods;
        s.R = c.R;
        if (c.repeats > 0) s.repeats = c.repeats;
        s.seed = c.seed;
        s.exec = options.exec;
        const BiasReport rep = run_debias(sc, s);
        emit(csv, bias_csv(rep));
        emit(js, echo(c, bias_json(rep)).dump(2) + "\n");
        break;
    }
    case RunKind::scaling: {
        const Scenario sc = make_scenario(c.generator, c.generator_params, c.functional, c.functional_params);
        ScalingSettings s;
        s.n = c.n;
        s.B = c.B[0];
        s.seeds = c.seeds;
        s.seed = c.seed;
        s.exec = options.exec;
        const ScalingReport rep = run_scaling(sc, s);
        emit(csv, scaling_csv(rep));
        emit(c.out_dir / (stem + "_fit.csv"), scaling_fit_csv(rep));
        emit(js, echo(c, scaling_json(rep)).dump(2) + "\n");
        break;
    }
    case RunKind::pi: {
        const Scenario sc = make_scenario(c.generator, c.generator_params, "", json::object());
        PiSettings s;
        s.n = c.n[0];
        s.n_test = c.n_test;
        s.B = c.B[0];
        s.alpha = c.alpha;
        s.model = c.model;
        s.seed = c.seed;
        s.exec = options.exec;
        const PiReport rep = run_pi(sc, s);
        emit(csv, pi_csv(rep));
        emit(js, echo(c, pi_json(rep)).dump(2) + "\n");
        break;
    }
    case RunKind::estimate: {
        json params = c.functional_params;
        params.erase("component");
        const FunctionalSpec spec = FunctionalRegistry::builtin().make(c.functional, params);
        const Dataset data = load_dataset_csv(c.inputs);
        EstimateSettings s;
        if (!c.methods.empty()) s.methods = c.methods;
        if (!c.B.empty()) s.B = c.B[0];
        s.alpha = c.alpha;
        s.seed = c.seed;
        s.exec = options.exec;
        const auto rows = run_estimate(spec, data, s);
        emit(csv, estimate_csv(rows));
        break;
    }
    }
    return written;
}

}  // namespace orthoboot
