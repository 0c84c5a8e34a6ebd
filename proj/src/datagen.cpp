#include "lnl/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lnl::data {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) throw std::runtime_error("bad numeric field: " + std::string(s));
    return v;
}

int parse_int(std::string_view s) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) throw std::runtime_error("bad integer field: " + std::string(s));
    return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

int DatasetSpec::total_samples() const {
    int n = 0;
    for (const auto& sp : subpops) n += sp.n_samples;
    return n;
}

int DatasetSpec::num_classes() const {
    int c = 0;
    for (const auto& sp : subpops) c = std::max(c, sp.class_id + 1);
    return c;
}

int DatasetSpec::num_groups() const {
    int k = 0;
    for (const auto& sp : subpops) k = std::max(k, sp.group_id + 1);
    return k;
}

void DatasetSpec::validate() const {
    if (subpops.empty()) throw std::invalid_argument("DatasetSpec: no subpopulations");
    if (d_core < 0 || d_spur < 0 || dim() < 1)
        throw std::invalid_argument("DatasetSpec: feature dimension must be >= 1");

    std::set<int> groups;
    std::set<int> classes_seen;
    for (const auto& sp : subpops) {
        if (sp.n_samples < 1) throw std::invalid_argument("SubpopSpec: n_samples must be >= 1");
        if (!(sp.stddev > 0.0)) throw std::invalid_argument("SubpopSpec: stddev must be > 0");
        if (sp.class_id < 0) throw std::invalid_argument("SubpopSpec: negative class_id");
        if (sp.group_id < 0) throw std::invalid_argument("SubpopSpec: negative group_id");
        if (static_cast<int>(sp.core_mean.size()) != d_core)
            throw std::invalid_argument("SubpopSpec: core_mean length != d_core");
        if (static_cast<int>(sp.spurious_mean.size()) != d_spur)
            throw std::invalid_argument("SubpopSpec: spurious_mean length != d_spur");
        if (!groups.insert(sp.group_id).second)
            throw std::invalid_argument("DatasetSpec: duplicate group_id");
        classes_seen.insert(sp.class_id);
    }
    // Every class in [0, C) must own at least one group, and K >= C follows.
    int c = num_classes();
    for (int cls = 0; cls < c; ++cls) {
        if (!classes_seen.count(cls))
            throw std::invalid_argument("DatasetSpec: class without any subpopulation");
    }
}

void NoiseSpec::validate(int num_classes) const {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("NoiseSpec: rate must be in [0,1]");
    if (kind == NoiseKind::symmetric && !transition.empty())
        throw std::invalid_argument("NoiseSpec: transition matrix only applies to asymmetric noise");
    if (kind == NoiseKind::asymmetric) {
        if (transition.empty()) throw std::invalid_argument("NoiseSpec: asymmetric noise needs a transition matrix");
        if (static_cast<int>(transition.size()) != num_classes)
            throw std::invalid_argument("NoiseSpec: transition matrix must be C x C");
        for (const auto& row : transition) {
            if (static_cast<int>(row.size()) != num_classes)
                throw std::invalid_argument("NoiseSpec: transition matrix must be C x C");
            double sum = 0.0;
            for (double p : row) {
                if (p < 0.0) throw std::invalid_argument("NoiseSpec: negative transition probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("NoiseSpec: transition rows must sum to 1");
        }
    }
}

Dataset generate(const DatasetSpec& spec, Rng& rng) {
    spec.validate();

    const int n = spec.total_samples();
    const int d = spec.dim();

    Matrix feats(n, d);
    std::vector<int> labels(n);
    std::vector<int> groups(n);

    int row = 0;
    for (const auto& sp : spec.subpops) {
        for (int s = 0; s < sp.n_samples; ++s, ++row) {
            double* x = feats.row(row);
            for (int j = 0; j < spec.d_core; ++j) x[j] = sp.core_mean[j] + sp.stddev * rng.normal();
            for (int j = 0; j < spec.d_spur; ++j)
                x[spec.d_core + j] = sp.spurious_mean[j] + sp.stddev * rng.normal();
            labels[row] = sp.class_id;
            groups[row] = sp.group_id;
        }
    }

    std::vector<int> order = rng.permutation(n);
    Dataset ds;
    ds.features = Matrix(n, d);
    ds.noisy_labels.resize(n);
    ds.true_labels.resize(n);
    ds.group_ids.resize(n);
    ds.corrupted.assign(n, 0);
    ds.num_classes = spec.num_classes();
    for (int i = 0; i < n; ++i) {
        const int src = order[i];
        std::copy(feats.row(src), feats.row(src) + d, ds.features.row(i));
        ds.true_labels[i] = labels[src];
        ds.noisy_labels[i] = labels[src];
        ds.group_ids[i] = groups[src];
    }
    return ds;
}

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, Rng& rng) {
    spec.validate(ds.num_classes);

    Dataset out = ds;
    const int n = out.n();
    const int c = out.num_classes;
    out.noisy_labels = out.true_labels;  // overwrite any previous corruption

    if (spec.kind == NoiseKind::symmetric) {
        const int flips = static_cast<int>(std::llround(spec.rate * n));
        std::vector<int> order = rng.permutation(n);
        for (int t = 0; t < flips; ++t) {
            const int i = order[t];
            if (spec.include_self) {
                out.noisy_labels[i] = rng.uniform_int(c);
            } else {
                int offset = 1 + rng.uniform_int(c - 1);
                out.noisy_labels[i] = (out.true_labels[i] + offset) % c;
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            const auto& row = spec.transition[out.true_labels[i]];
            double u = rng.uniform();
            double acc = 0.0;
            int pick = c - 1;
            for (int j = 0; j < c; ++j) {
                acc += row[j];
                if (u < acc) {
                    pick = j;
                    break;
                }
            }
            out.noisy_labels[i] = pick;
        }
    }

    for (int i = 0; i < n; ++i) out.corrupted[i] = out.noisy_labels[i] != out.true_labels[i] ? 1 : 0;
    return out;
}

std::vector<double> augment_weak(const double* x, int d, double sigma_w, Rng& rng) {
    std::vector<double> out(d);
    for (int j = 0; j < d; ++j) out[j] = x[j] + sigma_w * rng.normal();
    return out;
}

std::vector<double> augment_strong(const double* x, int d, double sigma_s, double p_drop, Rng& rng) {
    std::vector<double> out(d);
    for (int j = 0; j < d; ++j) out[j] = x[j] + sigma_s * rng.normal();
    if (p_drop > 0.0) {
        for (int j = 0; j < d; ++j) {
            if (rng.uniform() < p_drop) out[j] = 0.0;
        }
    }
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::string out;
    const int d = ds.dim();
    for (int j = 0; j < d; ++j) {
        out += "f" + std::to_string(j) + ",";
    }
    out += "noisy_label,true_label,group_id,corrupted\n";
    for (int i = 0; i < ds.n(); ++i) {
        const double* x = ds.features.row(i);
        for (int j = 0; j < d; ++j) {
            append_double(out, x[j]);
            out += ',';
        }
        out += std::to_string(ds.noisy_labels[i]) + "," + std::to_string(ds.true_labels[i]) + "," +
               std::to_string(ds.group_ids[i]) + "," + std::to_string(int(ds.corrupted[i])) + "\n";
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset csv: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty dataset csv: " + path);

    auto header = split_csv_line(line);
    int d = 0;
    while (d < static_cast<int>(header.size()) && !header[d].empty() && header[d][0] == 'f') ++d;
    if (d == 0 || header.size() != static_cast<size_t>(d) + 4)
        throw std::runtime_error("unrecognized dataset csv header: " + path);

    Dataset ds;
    std::vector<double> feat_buf;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != static_cast<size_t>(d) + 4)
            throw std::runtime_error("bad dataset csv row: " + path);
        for (int j = 0; j < d; ++j) feat_buf.push_back(parse_double(fields[j]));
        ds.noisy_labels.push_back(parse_int(fields[d]));
        ds.true_labels.push_back(parse_int(fields[d + 1]));
        ds.group_ids.push_back(parse_int(fields[d + 2]));
        ds.corrupted.push_back(static_cast<uint8_t>(parse_int(fields[d + 3])));
    }
    const int n = static_cast<int>(ds.noisy_labels.size());
    ds.features = Matrix(n, d);
    ds.features.data = std::move(feat_buf);
    for (int i = 0; i < n; ++i)
        ds.num_classes = std::max({ds.num_classes, ds.noisy_labels[i] + 1, ds.true_labels[i] + 1});
    return ds;
}

namespace {

nlohmann::json spec_to_json(const DatasetSpec& spec) {
    nlohmann::json j;
    j["d_core"] = spec.d_core;
    j["d_spur"] = spec.d_spur;
    j["seed"] = spec.seed;
    j["subpops"] = nlohmann::json::array();
    for (const auto& sp : spec.subpops) {
        j["subpops"].push_back({{"class_id", sp.class_id},
                                {"group_id", sp.group_id},
                                {"n_samples", sp.n_samples},
                                {"core_mean", sp.core_mean},
                                {"spurious_mean", sp.spurious_mean},
                                {"stddev", sp.stddev}});
    }
    return j;
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    spec.d_core = j.at("d_core").get<int>();
    spec.d_spur = j.at("d_spur").get<int>();
    spec.seed = j.at("seed").get<uint64_t>();
    for (const auto& e : j.at("subpops")) {
        SubpopSpec sp;
        sp.class_id = e.at("class_id").get<int>();
        sp.group_id = e.at("group_id").get<int>();
        sp.n_samples = e.at("n_samples").get<int>();
        sp.core_mean = e.at("core_mean").get<std::vector<double>>();
        sp.spurious_mean = e.at("spurious_mean").get<std::vector<double>>();
        sp.stddev = e.at("stddev").get<double>();
        spec.subpops.push_back(std::move(sp));
    }
    return spec;
}

}  // namespace

void save_sidecar(const DatasetSpec& spec, const NoiseSpec* noise, const std::string& path) {
    nlohmann::json j;
    j["spec"] = spec_to_json(spec);
    if (noise) {
        nlohmann::json nj;
        nj["kind"] = noise->kind == NoiseKind::symmetric ? "symmetric" : "asymmetric";
        nj["rate"] = noise->rate;
        nj["include_self"] = noise->include_self;
        if (!noise->transition.empty()) nj["transition"] = noise->transition;
        j["noise"] = nj;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << j.dump(2) << "\n";
}

void load_sidecar(const std::string& path, DatasetSpec& spec, NoiseSpec& noise, bool& has_noise) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open sidecar: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    spec = spec_from_json(j.at("spec"));
    has_noise = j.contains("noise");
    if (has_noise) {
        const auto& nj = j.at("noise");
        noise.kind = nj.at("kind").get<std::string>() == "asymmetric" ? NoiseKind::asymmetric
                                                                      : NoiseKind::symmetric;
        noise.rate = nj.at("rate").get<double>();
        noise.include_self = nj.value("include_self", false);
        if (nj.contains("transition")) noise.transition = nj.at("transition").get<std::vector<std::vector<double>>>();
    }
}

namespace {

std::vector<int> proportional_sizes(int n_total, const std::vector<double>& props) {
    std::vector<int> sizes(props.size());
    int assigned = 0;
    for (size_t i = 0; i < props.size(); ++i) {
        sizes[i] = std::max(1, static_cast<int>(std::llround(props[i] * n_total)));
        assigned += sizes[i];
    }
    sizes[0] += n_total - assigned;  // absorb rounding drift in the largest group
    return sizes;
}

}  // namespace

namespace {

// Core means sit on corners of a two-block sign pattern, one corner per
// group. Class membership is a nonlinear function of the core block (no
// single linear direction separates the classes), while each group stays a
// tight cluster, so neighbor structure survives even when a linear model
// leans on the spurious block. tail_pull < 1 drags the two tail corners
// toward each other, which makes the tail regions contested: a model
// trained on raw noisy labels tends to give them up, while denoised targets
// still carve them correctly.
std::vector<double> corner_mean(int d_core, double offset, double s_first, double s_second) {
    std::vector<double> m(d_core);
    for (int j = 0; j < d_core; ++j) m[j] = (j < d_core / 2 ? s_first : s_second) * offset;
    return m;
}

}  // namespace

DatasetSpec waterbirds_like_spec(int n_samples, uint64_t seed) {
    // 95/5 head/tail split within each class; each class's majority group
    // shares its spurious (background) direction with the other class's
    // minority group, so the background separates head groups cleanly and
    // points the wrong way on both tails.
    const int d_core = 6;
    const int d_spur = 2;
    const double core_offset = 1.4;
    const double tail_pull = 0.6;
    const double spur_offset = 2.0;
    const double stddev = 1.0;

    std::vector<double> water(d_spur, spur_offset), land(d_spur, -spur_offset);
    auto sizes = proportional_sizes(n_samples, {0.475, 0.025, 0.475, 0.025});

    DatasetSpec spec;
    spec.d_core = d_core;
    spec.d_spur = d_spur;
    spec.seed = seed;
    spec.subpops = {
        {0, 0, sizes[0], corner_mean(d_core, core_offset, +1.0, +1.0), water, stddev},
        {0, 1, sizes[1], corner_mean(d_core, core_offset, -1.0, -tail_pull), land, stddev},
        {1, 2, sizes[2], corner_mean(d_core, core_offset, +1.0, -1.0), land, stddev},
        {1, 3, sizes[3], corner_mean(d_core, core_offset, -1.0, +tail_pull), water, stddev},
    };
    return spec;
}

DatasetSpec celeba_like_spec(int n_samples, uint64_t seed) {
    // Group proportions mirror the hair-color task: the positive class is
    // dominated by one spurious attribute value and its tail group is ~1%.
    // Same corner construction as the waterbirds-like preset.
    const int d_core = 6;
    const int d_spur = 2;
    const double core_offset = 1.4;
    const double tail_pull = 0.6;
    const double spur_offset = 2.0;
    const double stddev = 1.0;

    std::vector<double> attr_pos(d_spur, spur_offset), attr_neg(d_spur, -spur_offset);
    auto sizes = proportional_sizes(n_samples, {0.4401, 0.4109, 0.1406, 0.0085});

    DatasetSpec spec;
    spec.d_core = d_core;
    spec.d_spur = d_spur;
    spec.seed = seed;
    spec.subpops = {
        {0, 0, sizes[0], corner_mean(d_core, core_offset, +1.0, +1.0), attr_pos, stddev},
        {0, 1, sizes[1], corner_mean(d_core, core_offset, +1.0, -1.0), attr_neg, stddev},
        {1, 2, sizes[2], corner_mean(d_core, core_offset, -1.0, +tail_pull), attr_pos, stddev},
        {1, 3, sizes[3], corner_mean(d_core, core_offset, -1.0, -tail_pull), attr_neg, stddev},
    };
    return spec;
}

}  // namespace lnl::data
