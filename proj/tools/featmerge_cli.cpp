// featmerge command-line tool. Every command prints a JSON report on stdout
// and writes CSV/.fma outputs where asked.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "featmerge/featmerge.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Failure {
    int code;
    std::string message;
};

int exit_code_for(fm_status status) {
    switch (status) {
        case FM_OK: return kOk;
        case FM_ERR_INVALID_ARGUMENT: return kUsage;
        case FM_ERR_INTERNAL: return kInternal;
        default: return kData;
    }
}

void check(fm_status status) {
    if (status != FM_OK) throw Failure{exit_code_for(status), fm_last_error()};
}

struct NetworkDeleter {
    void operator()(fm_network* p) const { fm_network_free(p); }
};
struct DatasetDeleter {
    void operator()(fm_dataset* p) const { fm_dataset_free(p); }
};
using NetworkPtr = std::unique_ptr<fm_network, NetworkDeleter>;
using DatasetPtr = std::unique_ptr<fm_dataset, DatasetDeleter>;

NetworkPtr load_network(const std::string& path) {
    fm_network* net = nullptr;
    check(fm_network_load(path.c_str(), &net));
    return NetworkPtr(net);
}

DatasetPtr load_dataset(const std::string& path) {
    fm_dataset* data = nullptr;
    check(fm_dataset_load(path.c_str(), &data));
    return DatasetPtr(data);
}

// Takes ownership of a C string returned by the library.
json take_json(char* text) {
    std::unique_ptr<char, void (*)(char*)> owned(text, fm_string_free);
    return json::parse(owned.get());
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Failure{kData, "I/O error: cannot open '" + path.string() + "' for writing"};
    out << text;
    if (!out) throw Failure{kData, "I/O error: failed writing '" + path.string() + "'"};
}

void emit(const json& report) { std::cout << report.dump(2) << '\n'; }

json metrics(const fm_network* net, const fm_dataset* data) {
    double accuracy = 0.0;
    double loss = 0.0;
    check(fm_evaluate(net, data, &accuracy, &loss));
    return {{"accuracy", accuracy}, {"loss", loss}};
}

// JSON config file support: top-level keys are global options, one nested
// object per subcommand, e.g. {"merge": {"beta": 0.05}}. Command-line flags
// take precedence over file values.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const std::string name = opt->get_lnames()[0];
            if (opt->count() > 0) {
                j[name] = opt->as<std::string>();
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

  private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        return v.dump();
    }

    static void collect(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                std::vector<std::string> next = parents;
                next.push_back(key);
                collect(value, next, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const json& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

struct MergeFlags {
    std::optional<double> beta;
    std::vector<std::size_t> positions;
    std::optional<std::size_t> max_merges;
    bool no_bias = false;
    bool residual_interior = false;
    bool full_recompute = false;
};

json ifm_config(const MergeFlags& f) {
    json cfg = json::object();
    if (f.beta) cfg["beta"] = *f.beta;
    if (!f.positions.empty()) cfg["positions"] = f.positions;
    if (f.max_merges) cfg["max_merges"] = *f.max_merges;
    cfg["bias_in_distance"] = !f.no_bias;
    cfg["merge_residual_interior"] = f.residual_interior;
    cfg["incremental"] = !f.full_recompute;
    return cfg;
}

void add_merge_flags(CLI::App* cmd, MergeFlags& f, bool beta_required) {
    auto* beta = cmd->add_option("--beta", f.beta, "Stopping tolerance in (0, 1)");
    if (beta_required) beta->required();
    cmd->add_option("--positions", f.positions, "Producer layer indices to merge (default: all)")->delimiter(',');
    cmd->add_option("--max-merges", f.max_merges, "Cap on merges per position");
    cmd->add_flag("--no-bias", f.no_bias, "Leave the bias out of the distance");
    cmd->add_flag("--residual-interior", f.residual_interior, "Also merge positions inside residual blocks");
    cmd->add_flag("--full-recompute", f.full_recompute, "Recompute the whole distance matrix every iteration");
}

std::string format_timing(const json& t) {
    std::ostringstream s;
    s.precision(6);
    s << t["mean_s"].get<double>() << " +/- " << t["std_s"].get<double>() << " s over "
      << t["iterations"].get<std::size_t>() << " iterations";
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative feature merging toolkit"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_version_flag("--version", std::string(fm_version()));

    // analyze
    std::string an_model;
    std::optional<long> an_position;
    std::string an_out;
    bool an_no_bias = false;
    auto* analyze = app.add_subcommand("analyze", "Pairwise feature distance matrices");
    analyze->add_option("model", an_model, "Model archive (.fma)")->required();
    analyze->add_option("--position", an_position, "Producer layer index (default: all)");
    analyze->add_option("--out", an_out, "Directory for position_<layer>.csv files");
    analyze->add_flag("--no-bias", an_no_bias, "Leave the bias out of the distance");

    // merge
    std::string mg_model;
    std::string mg_dataset;
    std::string mg_out;
    std::string mg_report;
    std::size_t mg_timing = 100;
    MergeFlags mg_flags;
    auto* merge = app.add_subcommand("merge", "Merge equivalent features");
    merge->add_option("model", mg_model, "Model archive (.fma)")->required();
    add_merge_flags(merge, mg_flags, true);
    merge->add_option("--dataset", mg_dataset, "Dataset archive for accuracy before/after");
    merge->add_option("--out", mg_out, "Write the merged model here");
    merge->add_option("--report", mg_report, "Also write the JSON report here");
    merge->add_option("--timing-iterations", mg_timing, "Merge iterations to time")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    // grid
    std::string gr_model;
    std::string gr_dataset;
    std::vector<double> gr_betas;
    double gr_retention = 0.95;
    std::string gr_out;
    MergeFlags gr_flags;
    auto* grid = app.add_subcommand("grid", "Search the largest beta that keeps accuracy");
    grid->add_option("model", gr_model, "Model archive (.fma)")->required();
    grid->add_option("dataset", gr_dataset, "Dataset archive (.fma)")->required();
    grid->add_option("--betas", gr_betas, "Comma separated beta grid")->delimiter(',');
    grid->add_option("--retention", gr_retention, "Accuracy fraction to keep")->capture_default_str();
    grid->add_option("--out", gr_out, "Write the table as CSV");
    grid->add_option("--positions", gr_flags.positions, "Producer layer indices to merge")->delimiter(',');
    grid->add_flag("--no-bias", gr_flags.no_bias, "Leave the bias out of the distance");
    grid->add_flag("--residual-interior", gr_flags.residual_interior, "Also merge residual interiors");

    // complexity
    std::string cx_model;
    std::string cx_out;
    MergeFlags cx_flags;
    auto* complexity = app.add_subcommand("complexity", "Remaining features per layer");
    complexity->add_option("model", cx_model, "Model archive (.fma)")->required();
    add_merge_flags(complexity, cx_flags, true);
    complexity->add_option("--out", cx_out, "Write the profile as CSV");

    // interpolate
    std::string ip_model;
    std::string ip_mode;
    std::string ip_dataset;
    std::vector<double> ip_alphas;
    std::uint64_t ip_seed = 0;
    bool ip_avoid = false;
    std::string ip_out;
    MergeFlags ip_flags;
    ip_flags.beta = 0.01;
    auto* interpolate = app.add_subcommand("interpolate", "Interpolate a model with its swap-permuted copy");
    interpolate->add_option("model", ip_model, "Model archive (.fma)")->required();
    interpolate->add_option("--mode", ip_mode, "matched or random")
        ->required()
        ->check(CLI::IsMember({"matched", "random"}));
    interpolate->add_option("--dataset", ip_dataset, "Dataset archive (.fma)")->required();
    interpolate->add_option("--alphas", ip_alphas, "Comma separated alphas (default 0, 0.1, ..., 1)")->delimiter(',');
    add_merge_flags(interpolate, ip_flags, false);
    interpolate->add_option("--seed", ip_seed, "Seed for the random swap")->capture_default_str();
    interpolate->add_flag("--avoid-clusters", ip_avoid, "Random swap only touches unclustered features");
    interpolate->add_option("--out", ip_out, "Write the curve as CSV");

    // train
    std::string tr_dataset;
    std::string tr_out;
    std::vector<std::size_t> tr_hidden{16};
    std::size_t tr_epochs = 50;
    std::size_t tr_batch = 32;
    double tr_lr = 0.05;
    double tr_momentum = 0.9;
    double tr_wd = 1e-4;
    std::vector<std::size_t> tr_milestones;
    double tr_decay = 0.1;
    std::uint64_t tr_seed = 0;
    std::string tr_dtype = "f32";
    auto* train = app.add_subcommand("train", "Train an MLP classifier");
    train->add_option("--dataset", tr_dataset, "Dataset archive (.fma)")->required();
    train->add_option("--out", tr_out, "Model archive to write")->required();
    train->add_option("--hidden", tr_hidden, "Hidden widths, comma separated")->delimiter(',')->capture_default_str();
    train->add_option("--epochs", tr_epochs)->capture_default_str();
    train->add_option("--batch-size", tr_batch)->capture_default_str();
    train->add_option("--lr", tr_lr)->capture_default_str();
    train->add_option("--momentum", tr_momentum)->capture_default_str();
    train->add_option("--weight-decay", tr_wd)->capture_default_str();
    train->add_option("--milestones", tr_milestones, "Epochs where the learning rate decays")->delimiter(',');
    train->add_option("--lr-decay", tr_decay)->capture_default_str();
    train->add_option("--seed", tr_seed)->capture_default_str();
    train->add_option("--dtype", tr_dtype)->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();

    // plant
    std::string pl_model;
    std::size_t pl_position = 0;
    std::vector<std::string> pl_pairs;
    std::string pl_out;
    auto* plant = app.add_subcommand("plant", "Insert function-preserving duplicate features");
    plant->add_option("model", pl_model, "Model archive (.fma)")->required();
    plant->add_option("--position", pl_position, "Producer layer index")->required();
    plant->add_option("--pairs", pl_pairs, "source:count list, comma separated")->delimiter(',')->required();
    plant->add_option("--out", pl_out, "Model archive to write")->required();

    // dataset
    std::string ds_kind;
    std::size_t ds_n = 0;
    double ds_noise = 0.0;
    std::uint64_t ds_seed = 0;
    std::size_t ds_classes = 2;
    std::string ds_out;
    auto* dataset = app.add_subcommand("dataset", "Generate a synthetic dataset");
    dataset->add_option("--kind", ds_kind)->required()->check(CLI::IsMember({"blobs", "xor-grid", "ring"}));
    dataset->add_option("--n", ds_n, "Number of samples")->required();
    dataset->add_option("--noise", ds_noise)->capture_default_str();
    dataset->add_option("--seed", ds_seed)->capture_default_str();
    dataset->add_option("--classes", ds_classes)->capture_default_str();
    dataset->add_option("--out", ds_out, "Dataset archive to write")->required();

    // describe
    std::string de_model;
    auto* describe = app.add_subcommand("describe", "Print layers and mergeable positions");
    describe->add_option("model", de_model, "Model archive (.fma)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*analyze) {
            NetworkPtr net = load_network(an_model);
            char* text = nullptr;
            check(fm_analyze(net.get(), an_position ? *an_position : -1, an_no_bias ? 0 : 1, &text));
            json positions = take_json(text);
            json summary = json::array();
            for (json& p : positions) {
                const std::string csv = p["csv"].get<std::string>();
                p.erase("csv");
                if (!an_out.empty()) {
                    const fs::path file =
                        fs::path(an_out) / ("position_" + std::to_string(p["producer"].get<std::size_t>()) + ".csv");
                    write_text(file, csv);
                    p["csv_path"] = file.string();
                }
                summary.push_back(p);
            }
            emit({{"command", "analyze"}, {"model", an_model}, {"positions", summary}});
        } else if (*merge) {
            NetworkPtr net = load_network(mg_model);
            DatasetPtr data = mg_dataset.empty() ? nullptr : load_dataset(mg_dataset);
            const json cfg = ifm_config(mg_flags);
            fm_network* merged_raw = nullptr;
            char* text = nullptr;
            check(fm_merge(net.get(), cfg.dump().c_str(), &merged_raw, &text));
            NetworkPtr merged(merged_raw);
            const json result = take_json(text);
            check(fm_time_iterations(net.get(), cfg.dump().c_str(), mg_timing, &text));
            json timing = take_json(text);
            timing["summary"] = format_timing(timing);

            const double before = result["params_before"].get<double>();
            const double after = result["params_after"].get<double>();
            json report = {{"command", "merge"},
                           {"model", mg_model},
                           {"config", result["config"]},
                           {"positions", result["positions"]},
                           {"params_before", result["params_before"]},
                           {"params_after", result["params_after"]},
                           {"param_percentage", before > 0 ? 100.0 * after / before : 100.0},
                           {"merge_timing", result["iteration_timing"]},
                           {"timing", timing}};
            if (data) {
                report["metrics"] = {{"before", metrics(net.get(), data.get())},
                                     {"after", metrics(merged.get(), data.get())}};
            }
            if (!mg_out.empty()) {
                check(fm_network_save(merged.get(), mg_out.c_str()));
                report["out"] = mg_out;
            }
            if (!mg_report.empty()) write_text(mg_report, report.dump(2) + "\n");
            emit(report);
        } else if (*grid) {
            NetworkPtr net = load_network(gr_model);
            DatasetPtr data = load_dataset(gr_dataset);
            const json cfg = ifm_config(gr_flags);
            char* text = nullptr;
            check(fm_grid_search(net.get(), data.get(), gr_betas.empty() ? nullptr : gr_betas.data(), gr_betas.size(),
                                 gr_retention, cfg.dump().c_str(), &text));
            json result = take_json(text);
            if (!gr_out.empty()) write_text(gr_out, result["csv"].get<std::string>());
            result.erase("csv");
            result["command"] = "grid";
            result["model"] = gr_model;
            emit(result);
        } else if (*complexity) {
            NetworkPtr net = load_network(cx_model);
            char* text = nullptr;
            check(fm_complexity(net.get(), ifm_config(cx_flags).dump().c_str(), &text));
            json result = take_json(text);
            if (!cx_out.empty()) write_text(cx_out, result["csv"].get<std::string>());
            result.erase("csv");
            result["command"] = "complexity";
            result["model"] = cx_model;
            emit(result);
        } else if (*interpolate) {
            NetworkPtr net = load_network(ip_model);
            DatasetPtr data = load_dataset(ip_dataset);
            char* text = nullptr;
            check(fm_interpolate(net.get(), data.get(), ip_mode.c_str(), ip_seed, ip_avoid ? 1 : 0,
                                 ip_alphas.empty() ? nullptr : ip_alphas.data(), ip_alphas.size(),
                                 ifm_config(ip_flags).dump().c_str(), &text));
            json result = take_json(text);
            if (!ip_out.empty()) write_text(ip_out, result["csv"].get<std::string>());
            result.erase("csv");
            result["command"] = "interpolate";
            result["model"] = ip_model;
            result["seed"] = ip_seed;
            emit(result);
        } else if (*train) {
            DatasetPtr data = load_dataset(tr_dataset);
            const json cfg = {{"hidden", tr_hidden},         {"epochs", tr_epochs},      {"batch_size", tr_batch},
                              {"learning_rate", tr_lr},      {"momentum", tr_momentum},  {"weight_decay", tr_wd},
                              {"milestones", tr_milestones}, {"lr_decay", tr_decay},     {"seed", tr_seed},
                              {"dtype", tr_dtype}};
            fm_network* raw = nullptr;
            check(fm_train(data.get(), cfg.dump().c_str(), &raw));
            NetworkPtr net(raw);
            check(fm_network_save(net.get(), tr_out.c_str()));
            emit({{"command", "train"}, {"config", cfg}, {"metrics", metrics(net.get(), data.get())}, {"out", tr_out}});
        } else if (*plant) {
            std::vector<std::size_t> sources;
            std::vector<std::size_t> counts;
            for (const std::string& pair : pl_pairs) {
                const auto colon = pair.find(':');
                try {
                    if (colon == std::string::npos) throw std::invalid_argument(pair);
                    std::size_t used = 0;
                    sources.push_back(std::stoull(pair.substr(0, colon), &used));
                    counts.push_back(std::stoull(pair.substr(colon + 1), &used));
                } catch (const std::exception&) {
                    throw Failure{kUsage, "invalid --pairs entry '" + pair + "', expected source:count"};
                }
            }
            NetworkPtr net = load_network(pl_model);
            fm_network* raw = nullptr;
            check(fm_plant(net.get(), pl_position, sources.data(), counts.data(), sources.size(), &raw));
            NetworkPtr planted(raw);
            check(fm_network_save(planted.get(), pl_out.c_str()));
            std::uint64_t before = 0;
            std::uint64_t after = 0;
            check(fm_network_param_count(net.get(), &before));
            check(fm_network_param_count(planted.get(), &after));
            emit({{"command", "plant"},
                  {"position", pl_position},
                  {"sources", sources},
                  {"counts", counts},
                  {"params_before", before},
                  {"params_after", after},
                  {"out", pl_out}});
        } else if (*dataset) {
            fm_dataset* raw = nullptr;
            check(fm_dataset_make(ds_kind.c_str(), ds_n, ds_noise, ds_seed, ds_classes, &raw));
            DatasetPtr data(raw);
            check(fm_dataset_save(data.get(), ds_out.c_str()));
            emit({{"command", "dataset"},
                  {"kind", ds_kind},
                  {"n", ds_n},
                  {"noise", ds_noise},
                  {"seed", ds_seed},
                  {"classes", ds_classes},
                  {"out", ds_out}});
        } else if (*describe) {
            NetworkPtr net = load_network(de_model);
            char* text = nullptr;
            check(fm_network_describe(net.get(), &text));
            emit(take_json(text));
        }
    } catch (const Failure& f) {
        std::cerr << "featmerge: " << f.message << '\n';
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "featmerge: internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kOk;
}
