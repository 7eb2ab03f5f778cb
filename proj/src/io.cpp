#include "mgcn/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mgcn/error.hpp"
#include "mgcn/format.hpp"

namespace mgcn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool safe_file_stem(const std::string& s) {
    if (s.empty() || s == "." || s == "..") return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) return false;
    }
    return true;
}

std::string series_file(const Dataset& d, std::size_t m, std::size_t n) {
    const std::string stem = safe_file_stem(d.subject_ids[n]) ? d.subject_ids[n] : "subject-" + std::to_string(n + 1);
    const std::string mod = safe_file_stem(d.modalities[m].name) ? d.modalities[m].name : "modality-" + std::to_string(m + 1);
    return "series/" + mod + "/" + stem + ".csv";
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where + ": field '" + key + "' has the wrong type");
    }
}

json parse_json(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(where + ": invalid JSON: " + e.what());
    }
}

} // namespace

fs::path save_dataset(const Dataset& data, const fs::path& dir) {
    data.validate();
    fs::create_directories(dir);
    json j;
    j["format"] = "mgcn-dataset";
    j["version"] = 1;
    j["num_rois"] = data.num_rois;
    j["modalities"] = json::array();
    for (const auto& m : data.modalities) j["modalities"].push_back({{"name", m.name}, {"length", m.length}});
    j["subjects"] = json::array();
    for (std::size_t n = 0; n < data.num_subjects(); ++n) {
        json s;
        s["id"] = data.subject_ids[n];
        s["label"] = data.labels[n];
        json files;
        for (std::size_t m = 0; m < data.num_modalities(); ++m) {
            const std::string rel = series_file(data, m, n);
            fs::create_directories((dir / rel).parent_path());
            write_matrix_csv(dir / rel, data.series[m][n]);
            files[data.modalities[m].name] = rel;
        }
        s["series"] = std::move(files);
        j["subjects"].push_back(std::move(s));
    }
    if (!data.fn_labels.empty()) {
        std::string text;
        for (const auto& l : data.fn_labels) text += l + "\n";
        write_file_atomic(dir / "fn_labels.txt", text);
        j["fn_labels"] = "fn_labels.txt";
    } else {
        j["fn_labels"] = nullptr;
    }
    const Provenance& p = data.provenance;
    if (!p.latent.empty() || !p.planted_rois.empty() || !p.planted_edges.empty()) {
        json edges = json::array();
        for (auto [a, b] : p.planted_edges) edges.push_back({a, b});
        j["provenance"] = {{"seed", p.seed}, {"planted_rois", p.planted_rois}, {"planted_edges", edges},
                           {"latent", p.latent}};
    }
    const fs::path manifest = dir / "manifest.json";
    write_file_atomic(manifest, j.dump(2) + "\n");
    return manifest;
}

Dataset load_dataset(const fs::path& manifest) {
    const std::string where = manifest.string();
    if (!fs::exists(manifest)) throw ValidationError("manifest not found: " + where);
    const json j = parse_json(read_file(manifest), where);
    const fs::path base = manifest.parent_path();
    Dataset d;
    d.num_rois = field<std::size_t>(j, "num_rois", where);
    for (const auto& m : field<json>(j, "modalities", where)) {
        d.modalities.push_back({field<std::string>(m, "name", where), field<std::size_t>(m, "length", where)});
    }
    d.series.resize(d.modalities.size());
    for (const auto& s : field<json>(j, "subjects", where)) {
        const std::string id = field<std::string>(s, "id", where);
        d.subject_ids.push_back(id);
        d.labels.push_back(field<double>(s, "label", where + " subject " + id));
        const json files = field<json>(s, "series", where + " subject " + id);
        for (std::size_t m = 0; m < d.modalities.size(); ++m) {
            const std::string& mod = d.modalities[m].name;
            const std::string loc = "subject " + id + " modality " + mod;
            if (!files.contains(mod)) throw ValidationError(where + ": no series file listed for " + loc);
            const fs::path path = base / files.at(mod).get<std::string>();
            if (!fs::exists(path)) throw ValidationError("missing series file for " + loc + ": " + path.string());
            Tensor x = matrix_from_csv(read_file(path), loc + " (" + path.string() + ")");
            if (x.rows() != d.num_rois || x.cols() != d.modalities[m].length) {
                throw ValidationError(loc + ": series is " + x.shape_string() + ", manifest expects " +
                                      std::to_string(d.num_rois) + "x" + std::to_string(d.modalities[m].length));
            }
            d.series[m].push_back(std::move(x));
        }
    }
    if (j.contains("fn_labels") && !j["fn_labels"].is_null()) {
        const fs::path path = base / j["fn_labels"].get<std::string>();
        if (!fs::exists(path)) throw ValidationError("missing network label file: " + path.string());
        std::istringstream in(read_file(path));
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (!line.empty()) d.fn_labels.push_back(line);
        }
        if (d.fn_labels.size() != d.num_rois) {
            throw ValidationError(path.string() + ": " + std::to_string(d.fn_labels.size()) + " labels for " +
                                  std::to_string(d.num_rois) + " ROIs");
        }
    }
    if (j.contains("provenance")) {
        const json& p = j["provenance"];
        d.provenance.seed = field<std::uint64_t>(p, "seed", where);
        d.provenance.planted_rois = field<std::vector<std::size_t>>(p, "planted_rois", where);
        for (const auto& e : field<json>(p, "planted_edges", where)) {
            d.provenance.planted_edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
        }
        d.provenance.latent = field<std::vector<double>>(p, "latent", where);
    }
    d.validate();
    return d;
}

namespace {

struct Field {
    std::string key;
    std::function<void(const std::string&, const std::string&)> set;
    std::function<std::string()> get;
};

std::uint64_t parse_unsigned(const std::string& v, const std::string& loc) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ValidationError(loc + ": expected a non-negative integer, got '" + v + "'");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ValidationError(loc + ": integer out of range '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& loc) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError(loc + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> list_items(const std::string& v) {
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    for (const auto& s : split(v, ',')) out.push_back(trim(s));
    return out;
}

Field real(const std::string& key, double& target) {
    return {key, [&target](const std::string& v, const std::string& loc) { target = parse_double(v, loc); },
            [&target] { return format_double(target); }};
}

template <class Int>
Field integer(const std::string& key, Int& target) {
    return {key,
            [&target](const std::string& v, const std::string& loc) { target = static_cast<Int>(parse_unsigned(v, loc)); },
            [&target] { return std::to_string(target); }};
}

Field boolean(const std::string& key, bool& target) {
    return {key, [&target](const std::string& v, const std::string& loc) { target = parse_bool(v, loc); },
            [&target] { return std::string(target ? "true" : "false"); }};
}

Field size_list(const std::string& key, std::vector<std::size_t>& target) {
    return {key,
            [&target](const std::string& v, const std::string& loc) {
                target.clear();
                for (const auto& s : list_items(v)) target.push_back(parse_unsigned(s, loc));
            },
            [&target] {
                std::string out;
                for (std::size_t i = 0; i < target.size(); ++i) out += (i ? "," : "") + std::to_string(target[i]);
                return out;
            }};
}

std::vector<Field> fields(TrainConfig& t, SynthConfig& s) {
    std::vector<Field> f = {
        real("train.learning_rate", t.learning_rate),
        integer("train.max_epochs", t.max_epochs),
        integer("train.patience", t.patience),
        real("train.l2", t.l2),
        real("train.eta_between", t.eta_between),
        real("train.eta_within", t.eta_within),
        integer("train.knn_k", t.knn_k),
        {"train.knn_mode", [&t](const std::string& v, const std::string& loc) {
             try {
                 t.knn_mode = parse_knn_mode(v);
             } catch (const Error& e) {
                 throw ValidationError(loc + ": " + e.what());
             }
         },
         [&t] { return std::string(to_string(t.knn_mode)); }},
        {"train.zero_variance", [&t](const std::string& v, const std::string& loc) {
             try {
                 t.zero_variance = parse_zero_variance_policy(v);
             } catch (const Error& e) {
                 throw ValidationError(loc + ": " + e.what());
             }
         },
         [&t] { return std::string(to_string(t.zero_variance)); }},
        integer("train.hidden_channels", t.hidden_channels),
        integer("train.embed_channels", t.embed_channels),
        size_list("train.mlp_hidden", t.mlp_hidden),
        real("train.train_ratio", t.train_ratio),
        real("train.val_ratio", t.val_ratio),
        real("train.test_ratio", t.test_ratio),
        integer("train.seed", t.seed),
        integer("train.repeats", t.repeats),
        {"train.optimizer", [&t](const std::string& v, const std::string& loc) {
             try {
                 t.optimizer = parse_optimizer(v);
             } catch (const Error& e) {
                 throw ValidationError(loc + ": " + e.what());
             }
         },
         [&t] { return to_string(t.optimizer); }},
        real("train.adam_beta1", t.adam_beta1),
        real("train.adam_beta2", t.adam_beta2),
        real("train.adam_epsilon", t.adam_epsilon),
        real("train.mask_beta", t.mask_beta),
        real("train.mask_init", t.mask_init),
        boolean("train.mask_zero_diagonal", t.mask_zero_diagonal),
        integer("train.mask_runs", t.mask_runs),
        real("train.mask_tolerance", t.mask_tolerance),
        real("train.freq_threshold", t.freq_threshold),

        integer("synth.num_subjects", s.num_subjects),
        integer("synth.num_rois", s.num_rois),
        {"synth.modalities",
         [&s](const std::string& v, const std::string& loc) {
             s.modalities.clear();
             for (const auto& item : list_items(v)) {
                 const auto parts = split(item, ':');
                 if (parts.size() != 2 || trim(parts[0]).empty()) {
                     throw ValidationError(loc + ": expected name:length, got '" + item + "'");
                 }
                 s.modalities.push_back({trim(parts[0]), parse_unsigned(trim(parts[1]), loc)});
             }
         },
         [&s] {
             std::string out;
             for (std::size_t i = 0; i < s.modalities.size(); ++i)
                 out += (i ? "," : "") + s.modalities[i].name + ":" + std::to_string(s.modalities[i].length);
             return out;
         }},
        real("synth.snr", s.snr),
        integer("synth.planted_rois", s.planted_rois),
        integer("synth.planted_edges", s.planted_edges),
        integer("synth.num_communities", s.num_communities),
        real("synth.community_strength", s.community_strength),
        real("synth.roi_signal", s.roi_signal),
        real("synth.edge_signal", s.edge_signal),
        real("synth.label_noise", s.label_noise),
        real("synth.latent_noise", s.latent_noise),
        integer("synth.seed", s.seed),
        {"synth.latent",
         [&s](const std::string& v, const std::string& loc) {
             s.latent.clear();
             for (const auto& item : list_items(v)) s.latent.push_back(parse_double(item, loc));
         },
         [&s] {
             std::string out;
             for (std::size_t i = 0; i < s.latent.size(); ++i) out += (i ? "," : "") + format_double(s.latent[i]);
             return out;
         }},
    };
    return f;
}

} // namespace

void apply_config(const std::string& text, TrainConfig* train, SynthConfig* synth, const std::string& where) {
    TrainConfig scratch_train;
    SynthConfig scratch_synth;
    const auto table = fields(train ? *train : scratch_train, synth ? *synth : scratch_synth);
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string loc = where + ":" + std::to_string(number);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(loc + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ValidationError(loc + ": unknown key '" + key + "'");
        it->set(value, loc + " (" + key + ")");
    }
}

void load_config(const fs::path& path, TrainConfig* train, SynthConfig* synth) {
    if (!fs::exists(path)) throw ValidationError("config not found: " + path.string());
    apply_config(read_file(path), train, synth, path.string());
}

std::string config_to_text(const TrainConfig& train, const SynthConfig& synth) {
    TrainConfig t = train;
    SynthConfig s = synth;
    std::string out;
    for (const auto& f : fields(t, s)) out += f.key + " = " + f.get() + "\n";
    return out;
}

namespace {

constexpr char kMagic[8] = {'M', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos, const std::string& where) {
    if (pos + sizeof(T) > in.size()) throw ValidationError(where + ": truncated checkpoint");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
}

std::string fusion_name(FusionKind f) {
    switch (f) {
        case FusionKind::Concat: return "concat";
        case FusionKind::MeanPool: return "meanpool";
        case FusionKind::RawFc: return "rawfc";
    }
    return "concat";
}

FusionKind parse_fusion(const std::string& s, const std::string& where) {
    if (s == "concat") return FusionKind::Concat;
    if (s == "meanpool") return FusionKind::MeanPool;
    if (s == "rawfc") return FusionKind::RawFc;
    throw ValidationError(where + ": unknown fusion '" + s + "'");
}

} // namespace

void save_checkpoint(const fs::path& path, const TrainResult& model, const CheckpointInfo& info) {
    const ModelSpec& spec = model.spec;
    json h;
    h["spec"] = {{"num_rois", spec.num_rois},
                 {"series_lengths", spec.series_lengths},
                 {"hidden_channels", spec.hidden_channels},
                 {"embed_channels", spec.embed_channels},
                 {"mlp_hidden", spec.mlp_hidden},
                 {"fusion", fusion_name(spec.fusion)},
                 {"edge_mask", spec.edge_mask},
                 {"mask_zero_diagonal", spec.mask_zero_diagonal},
                 {"mask_init", spec.mask_init}};
    h["label_mean"] = model.label_mean;
    h["best_epoch"] = model.best_epoch;
    h["best_score"] = std::isfinite(model.best_score) ? json(model.best_score) : json(nullptr);
    h["epochs_run"] = model.epochs_run;
    h["converged"] = model.converged;
    h["run"] = {{"model", info.model}, {"modalities", info.modalities}, {"seed", info.seed}};
    h["tensors"] = json::array();
    std::string body;
    for (const auto& [name, t] : model.params.entries()) {
        h["tensors"].push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}});
        for (double v : t->values()) put_le(body, std::bit_cast<std::uint64_t>(v));
    }
    const std::string header = h.dump();
    std::string out(kMagic, sizeof(kMagic));
    put_le(out, kVersion);
    put_le(out, static_cast<std::uint64_t>(header.size()));
    out += header;
    out += body;
    write_file_atomic(path, out);
}

TrainResult load_checkpoint(const fs::path& path, CheckpointInfo* info) {
    const std::string where = path.string();
    if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + where);
    const std::string in = read_file(path);
    if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError(where + ": not a checkpoint (bad magic)");
    }
    std::size_t pos = sizeof(kMagic);
    const auto version = get_le<std::uint32_t>(in, pos, where);
    if (version != kVersion) throw ValidationError(where + ": unsupported checkpoint version " + std::to_string(version));
    const auto header_len = get_le<std::uint64_t>(in, pos, where);
    if (header_len > in.size() - pos) throw ValidationError(where + ": truncated checkpoint header");
    const json h = parse_json(in.substr(pos, header_len), where);
    pos += header_len;

    TrainResult r;
    const json& s = field<json>(h, "spec", where);
    r.spec.num_rois = field<std::size_t>(s, "num_rois", where);
    r.spec.series_lengths = field<std::vector<std::size_t>>(s, "series_lengths", where);
    r.spec.hidden_channels = field<std::size_t>(s, "hidden_channels", where);
    r.spec.embed_channels = field<std::size_t>(s, "embed_channels", where);
    r.spec.mlp_hidden = field<std::vector<std::size_t>>(s, "mlp_hidden", where);
    r.spec.fusion = parse_fusion(field<std::string>(s, "fusion", where), where);
    r.spec.edge_mask = field<bool>(s, "edge_mask", where);
    r.spec.mask_zero_diagonal = field<bool>(s, "mask_zero_diagonal", where);
    r.spec.mask_init = field<double>(s, "mask_init", where);
    r.spec.validate();
    r.label_mean = field<double>(h, "label_mean", where);
    r.best_epoch = field<std::size_t>(h, "best_epoch", where);
    r.best_score = h.contains("best_score") && h["best_score"].is_number() ? h["best_score"].get<double>()
                                                                           : std::numeric_limits<double>::quiet_NaN();
    r.epochs_run = field<std::size_t>(h, "epochs_run", where);
    r.converged = field<bool>(h, "converged", where);
    if (info != nullptr) {
        const json& run = field<json>(h, "run", where);
        info->model = field<std::string>(run, "model", where);
        info->modalities = field<std::vector<std::string>>(run, "modalities", where);
        info->seed = field<std::uint64_t>(run, "seed", where);
    }

    r.params = init_params(r.spec, 0);
    auto entries = r.params.entries();
    const json& tensors = field<json>(h, "tensors", where);
    if (tensors.size() != entries.size()) {
        throw ValidationError(where + ": " + std::to_string(tensors.size()) + " tensors, model needs " +
                              std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const json& t = tensors[i];
        const std::string name = field<std::string>(t, "name", where);
        if (name != entries[i].name || field<std::size_t>(t, "rows", where) != entries[i].tensor->rows() ||
            field<std::size_t>(t, "cols", where) != entries[i].tensor->cols()) {
            throw ValidationError(where + ": tensor " + std::to_string(i) + " ('" + name +
                                  "') does not match the model layout");
        }
        for (double& v : entries[i].tensor->values()) v = std::bit_cast<double>(get_le<std::uint64_t>(in, pos, where));
    }
    if (pos != in.size()) throw ValidationError(where + ": trailing bytes after tensor data");
    return r;
}

} // namespace mgcn
