#include "quic/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "quic/audit.hpp"
#include "quic/qten.hpp"

namespace quic::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad ") + what + " entry '" + item + "'");
        }
    }
    return out;
}

// "0:1,2:3"
std::vector<std::pair<std::size_t, std::size_t>> parse_pairs(const std::string& text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("feature pair '" + item + "' is not of the form i:j");
        const auto a = parse_list(item.substr(0, colon), "pair");
        const auto b = parse_list(item.substr(colon + 1), "pair");
        if (a.size() != 1 || b.size() != 1) throw ConfigError("feature pair '" + item + "' is not of the form i:j");
        out.emplace_back(a[0], b[0]);
    }
    return out;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct SplitChoice {
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

Dataset pick_split(const Dataset& ds, const SplitChoice& s, const std::string& which) {
    if (which == "all") return ds;
    auto split = stratified_split(ds, s.train_fraction, s.seed);
    if (which == "train") return std::move(split.train);
    if (which == "test") {
        if (split.test.size() == 0) throw DataError("the test split is empty");
        return std::move(split.test);
    }
    throw ConfigError("unknown split '" + which + "' (expected train, test or all)");
}

SplitChoice split_from_checkpoint(const Checkpoint& ckpt) {
    SplitChoice s;
    const json meta = json::parse(ckpt.meta, nullptr, false);
    if (meta.is_object() && meta.contains("run") && meta["run"].is_object()) {
        const auto& run = meta["run"];
        if (run.contains("split_seed")) s.seed = run["split_seed"].get<std::uint64_t>();
        if (run.contains("train_fraction")) s.train_fraction = run["train_fraction"].get<double>();
    }
    return s;
}

void check_compatible(const Model& model, const Dataset& ds) {
    if (ds.sample_shape() != model.config().sample_shape) {
        throw ConfigError("dataset samples " + shape_str(ds.sample_shape()) + " do not match the checkpoint's " +
                          shape_str(model.config().sample_shape));
    }
    if (ds.num_classes > model.head().config().classes) {
        throw ConfigError("dataset has " + std::to_string(ds.num_classes) + " classes, checkpoint head has " +
                          std::to_string(model.head().config().classes));
    }
}

// ---- gen --------------------------------------------------------------------

struct GenArgs {
    std::string kind = "cooc";
    std::string pairs;
    std::string out;
    bool force = false;
    DatasetSpec spec;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    DatasetSpec spec = a.spec;
    spec.kind = parse_dataset_kind(a.kind);
    if (spec.kind == DatasetKind::file) throw ConfigError("gen only produces synthetic datasets");
    if (!a.pairs.empty()) spec.pairs = parse_pairs(a.pairs);
    spec.test_fraction = 1.0 - spec.train_fraction;
    spec.validate();
    const fs::path dir(a.out);
    if (fs::exists(dir) && !fs::is_empty(dir) && !a.force) {
        throw ConfigError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    }
    const Dataset ds = make_dataset(spec);
    save_dataset(dir, ds, dataset_meta_json(spec, ds));
    out << "wrote " << ds.size() << " samples (" << ds.num_classes << " classes, sample shape "
        << shape_str(ds.sample_shape()) << ") to " << dir.string() << "\n";
    return ok;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, config;
    bool full_protocol = false;
    std::string head, backbone, widths, a_init;
    std::size_t features = 0;
    TrainConfig flags;  // receives flag values; only options actually given are applied
    bool l2_normalize = false, no_logit_bn = false, freeze_interaction = false;
    std::uint64_t split_seed = 0;
    double train_fraction = 0.8;
};

struct TrainOpts {
    CLI::Option *head, *backbone, *features, *widths, *a_init, *epochs, *lr, *momentum, *wd, *batch, *decay_factor,
        *decay_every, *seed, *bn_eps, *bn_momentum, *se_reduction, *l2, *no_logit_bn, *freeze, *split_seed,
        *train_fraction;
};

// Flags win over a manifest's recorded split, which wins over the defaults.
SplitChoice resolve_split(const TrainArgs& a, const TrainOpts& o) {
    SplitChoice s{a.split_seed, a.train_fraction};
    if (!a.config.empty()) {
        const json j = json::parse(read_text(a.config), nullptr, false);
        if (j.is_object() && j.contains("split") && j["split"].is_object()) {
            const json& r = j["split"];
            try {
                if (!o.split_seed->count() && r.contains("seed")) s.seed = r["seed"].get<std::uint64_t>();
                if (!o.train_fraction->count() && r.contains("train_fraction"))
                    s.train_fraction = r["train_fraction"].get<double>();
            } catch (const json::exception& e) {
                throw ConfigError(std::string("malformed split in config: ") + e.what());
            }
        }
    }
    return s;
}

TrainConfig resolve_train_config(const TrainArgs& a, const TrainOpts& o, const Dataset& ds, bool& features_given) {
    TrainConfig cfg = a.full_protocol ? TrainConfig::full_protocol() : TrainConfig{};
    features_given = false;
    if (!a.config.empty()) {
        const std::string text = read_text(a.config);
        cfg = train_config_from_json(text, cfg);
        const json j = json::parse(text, nullptr, false);
        const json& c = j.is_object() && j.contains("config") ? j["config"] : j;
        features_given = c.is_object() && c.contains("backbone") && c["backbone"].contains("features");
    }
    const TrainConfig& f = a.flags;
    if (o.head->count()) cfg.head = parse_head_kind(a.head);
    if (o.backbone->count()) cfg.backbone.kind = parse_backbone_kind(a.backbone);
    if (o.features->count()) {
        cfg.backbone.features = a.features;
        features_given = true;
    }
    if (o.widths->count()) cfg.backbone.widths = parse_list(a.widths, "width");
    if (o.a_init->count()) cfg.interaction_init = parse_interaction_init(a.a_init);
    if (o.epochs->count()) cfg.epochs = f.epochs;
    if (o.lr->count()) cfg.lr0 = f.lr0;
    if (o.momentum->count()) cfg.momentum = f.momentum;
    if (o.wd->count()) cfg.weight_decay = f.weight_decay;
    if (o.batch->count()) cfg.batch_size = f.batch_size;
    if (o.decay_factor->count()) cfg.lr_decay_factor = f.lr_decay_factor;
    if (o.decay_every->count()) cfg.lr_decay_every = f.lr_decay_every;
    if (o.seed->count()) cfg.seed = f.seed;
    if (o.bn_eps->count()) cfg.bn_eps = f.bn_eps;
    if (o.bn_momentum->count()) cfg.bn_momentum = f.bn_momentum;
    if (o.se_reduction->count()) cfg.se_reduction = f.se_reduction;
    if (o.l2->count()) cfg.l2_normalize = true;
    if (o.no_logit_bn->count()) cfg.logit_bn = false;
    if (o.freeze->count()) cfg.freeze_interaction = true;
    if (!features_given) {
        switch (cfg.backbone.kind) {
            case BackboneKind::identity: cfg.backbone.features = shape_numel(ds.sample_shape()); break;
            case BackboneKind::mlp: cfg.backbone.features = 32; break;
            case BackboneKind::tiny_cnn: cfg.backbone.features = 64; break;
        }
    }
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainArgs& a, const TrainOpts& o, std::ostream& out, std::ostream& err) {
    const Dataset ds = load_qten_dataset(a.data);
    bool features_given = false;
    const TrainConfig cfg = resolve_train_config(a, o, ds, features_given);
    const SplitChoice split_choice = resolve_split(a, o);
    auto split = stratified_split(ds, split_choice.train_fraction, split_choice.seed);
    // Builds the model once up front so shape errors surface before any artifact.
    Model init(model_config_for(cfg, ds.sample_shape(), ds.num_classes), cfg.seed);

    const fs::path dir(a.out);
    fs::create_directories(dir);
    json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["command"] = "train";
    manifest["config"] = json::parse(train_config_json(cfg));
    manifest["seed"] = cfg.seed;
    manifest["dataset"] = fs::absolute(a.data).string();
    manifest["split"] = {{"seed", split_choice.seed}, {"train_fraction", split_choice.train_fraction}};
    manifest["artifacts"] = {{"checkpoint", "checkpoint.qckp"},
                             {"epoch_log", "epoch_log.csv"},
                             {"report", "report.json"},
                             {"confusion", "confusion.csv"}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

    json run;
    run["split_seed"] = split_choice.seed;
    run["train_fraction"] = split_choice.train_fraction;
    run["config"] = manifest["config"];
    const std::string run_meta = run.dump();

    std::vector<EpochLog> log;
    try {
        TrainResult result = train(std::move(init), split.train, split.test, cfg, [&](const EpochLog& e) {
            log.push_back(e);
            write_file_atomic(dir / "epoch_log.csv", epoch_log_csv(log));
            out << "epoch " << e.epoch << " lr " << fmt_g(e.lr) << " train_loss " << fmt_g(e.train_loss) << " test_top1 "
                << fmt_g(e.test_top1) << "\n";
        });
        write_file_atomic(dir / "epoch_log.csv", epoch_log_csv(result.log));
        save_checkpoint(dir / "checkpoint.qckp", result.model.to_checkpoint(run_meta));
        if (split.test.size()) {
            const EvalReport rep = evaluate(result.model, split.test);
            write_file_atomic(dir / "report.json", rep.to_json() + "\n");
            write_file_atomic(dir / "confusion.csv", rep.confusion_csv());
            out << "test top1 " << fmt_g(rep.top1) << "\n";
        }
    } catch (const TrainingDiverged& d) {
        write_file_atomic(dir / "epoch_log.csv", epoch_log_csv(d.log()));
        Checkpoint good = d.last_good();
        json meta = json::parse(good.meta);
        meta["run"] = run;
        good.meta = meta.dump();
        save_checkpoint(dir / "last_good.qckp", good);
        err << "error: training diverged: " << d.what() << "; last good state saved to "
            << (dir / "last_good.qckp").string() << "\n";
        return diverged;
    }
    return ok;
}

// ---- eval / export ------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, data, out, split = "test";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Model model = Model::from_checkpoint(ckpt);
    const Dataset ds = load_qten_dataset(a.data);
    check_compatible(model, ds);
    const Dataset part = pick_split(ds, split_from_checkpoint(ckpt), a.split);
    const EvalReport rep = evaluate(model, part);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_file_atomic(dir / "report.json", rep.to_json() + "\n");
    write_file_atomic(dir / "confusion.csv", rep.confusion_csv());
    out << "top1 " << fmt_g(rep.top1) << " over " << rep.total << " samples\n";
    return ok;
}

struct ExportArgs {
    std::string checkpoint, data, out, split = "all";
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Model model = Model::from_checkpoint(ckpt);
    const Dataset ds = load_qten_dataset(a.data);
    check_compatible(model, ds);
    const Dataset part = pick_split(ds, split_from_checkpoint(ckpt), a.split);
    std::string csv = "label";
    const std::size_t c = model.config().backbone.features;
    for (std::size_t j = 0; j < c; ++j) csv += ",f" + std::to_string(j);
    csv += "\n";
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < part.size(); start += 256) {
        rows.clear();
        for (std::size_t i = start; i < std::min(part.size(), start + 256); ++i) rows.push_back(i);
        const LabeledBatch b = gather(part, rows);
        const Tensor z = model.embed(b.inputs);
        for (std::size_t r = 0; r < b.size(); ++r) {
            csv += std::to_string(b.labels[r]);
            for (std::size_t j = 0; j < c; ++j) csv += "," + fmt_g(z[r * c + j]);
            csv += "\n";
        }
    }
    const fs::path path(a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, csv);
    out << "wrote " << part.size() << " embeddings of width " << c << " to " << path.string() << "\n";
    return ok;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
    HeadDims dims;
    BenchOptions opts;
    std::string heads = "fc,gap,se,quic,bcnn_oracle";
    std::string out = "audit.csv";
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    std::vector<HeadKind> heads;
    std::stringstream ss(a.heads);
    std::string item;
    while (std::getline(ss, item, ',')) heads.push_back(parse_head_kind(item));
    if (heads.empty()) throw ConfigError("no heads to bench");
    const AuditReport rep = bench_heads(a.dims, heads, a.opts);
    const fs::path path(a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, rep.to_csv());
    out << rep.to_csv();
    return ok;
}

}  // namespace

std::string train_config_json(const TrainConfig& cfg) {
    json j;
    j["lr0"] = cfg.lr0;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["lr_decay_factor"] = cfg.lr_decay_factor;
    j["lr_decay_every"] = cfg.lr_decay_every;
    j["seed"] = cfg.seed;
    j["head"] = head_name(cfg.head);
    j["backbone"] = {{"kind", backbone_name(cfg.backbone.kind)},
                     {"features", cfg.backbone.features},
                     {"widths", cfg.backbone.resolved_widths()}};
    j["l2_normalize"] = cfg.l2_normalize;
    j["logit_bn"] = cfg.logit_bn;
    j["freeze_interaction"] = cfg.freeze_interaction;
    j["interaction_init"] = interaction_init_name(cfg.interaction_init);
    j["bn_eps"] = cfg.bn_eps;
    j["bn_momentum"] = cfg.bn_momentum;
    j["se_reduction"] = cfg.se_reduction;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig cfg) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const json& j = root.is_object() && root.contains("config") ? root["config"] : root;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{"lr0",          "momentum",           "weight_decay",     "batch_size",
                                                "epochs",       "lr_decay_factor",    "lr_decay_every",   "seed",
                                                "head",         "backbone",           "l2_normalize",     "logit_bn",
                                                "freeze_interaction", "interaction_init", "bn_eps",      "bn_momentum",
                                                "se_reduction"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& dst) {
            if (j.contains(key)) dst = j[key].get<std::decay_t<decltype(dst)>>();
        };
        get("lr0", cfg.lr0);
        get("momentum", cfg.momentum);
        get("weight_decay", cfg.weight_decay);
        get("batch_size", cfg.batch_size);
        get("epochs", cfg.epochs);
        get("lr_decay_factor", cfg.lr_decay_factor);
        get("lr_decay_every", cfg.lr_decay_every);
        get("seed", cfg.seed);
        get("l2_normalize", cfg.l2_normalize);
        get("logit_bn", cfg.logit_bn);
        get("freeze_interaction", cfg.freeze_interaction);
        get("bn_eps", cfg.bn_eps);
        get("bn_momentum", cfg.bn_momentum);
        get("se_reduction", cfg.se_reduction);
        if (j.contains("head")) cfg.head = parse_head_kind(j["head"].get<std::string>());
        if (j.contains("interaction_init")) cfg.interaction_init = parse_interaction_init(j["interaction_init"].get<std::string>());
        if (j.contains("backbone")) {
            const json& b = j["backbone"];
            if (!b.is_object()) throw ConfigError("config backbone must be an object");
            if (b.contains("kind")) cfg.backbone.kind = parse_backbone_kind(b["kind"].get<std::string>());
            if (b.contains("features")) cfg.backbone.features = b["features"].get<std::size_t>();
            if (b.contains("widths")) cfg.backbone.widths = b["widths"].get<std::vector<std::size_t>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return cfg;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"QuIC classifier toolkit", "quic"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset directory");
    g->add_option("--kind", gen.kind, "cooc or texture")->capture_default_str();
    g->add_option("--classes", gen.spec.num_classes, "Number of classes")->capture_default_str();
    g->add_option("--per-class", gen.spec.samples_per_class, "Samples per class")->capture_default_str();
    g->add_option("--dim", gen.spec.feature_dim, "cooc feature dimension")->capture_default_str();
    g->add_option("--pairs", gen.pairs, "cooc feature pairs, e.g. 0:1,2:3");
    g->add_option("--image-size", gen.spec.image_size, "texture image side")->capture_default_str();
    g->add_option("--motif-size", gen.spec.motif_size, "texture motif side")->capture_default_str();
    g->add_option("--noise", gen.spec.noise, "Gaussian noise sigma")->capture_default_str();
    g->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
    g->add_option("--train-fraction", gen.spec.train_fraction, "Recorded default train fraction")->capture_default_str();
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

    TrainArgs tr;
    TrainOpts to{};
    auto* t = app.add_subcommand("train", "Train a backbone + head on a dataset directory");
    t->add_option("--data", tr.data, "Dataset directory")->required();
    t->add_option("--out", tr.out, "Run output directory")->required();
    t->add_option("--config", tr.config, "JSON config or a previous run manifest");
    t->add_flag("--full-protocol", tr.full_protocol, "Start from the 50-epoch protocol defaults");
    to.head = t->add_option("--head", tr.head, "fc, gap, se, quic or bcnn_oracle");
    to.backbone = t->add_option("--backbone", tr.backbone, "identity, mlp or tiny_cnn");
    to.features = t->add_option("--features", tr.features, "Backbone output width C");
    to.widths = t->add_option("--widths", tr.widths, "Hidden widths / channel plan, e.g. 64,64");
    to.a_init = t->add_option("--a-init", tr.a_init, "zeros or small_normal");
    to.epochs = t->add_option("--epochs", tr.flags.epochs, "Epochs");
    to.lr = t->add_option("--lr", tr.flags.lr0, "Initial learning rate");
    to.momentum = t->add_option("--momentum", tr.flags.momentum, "SGD momentum");
    to.wd = t->add_option("--weight-decay", tr.flags.weight_decay, "Weight decay");
    to.batch = t->add_option("--batch-size", tr.flags.batch_size, "Mini-batch size");
    to.decay_factor = t->add_option("--lr-decay-factor", tr.flags.lr_decay_factor, "Step decay factor");
    to.decay_every = t->add_option("--lr-decay-every", tr.flags.lr_decay_every, "Epochs between decays");
    to.seed = t->add_option("--seed", tr.flags.seed, "Initialization and shuffling seed");
    to.bn_eps = t->add_option("--bn-eps", tr.flags.bn_eps, "Logit batch-norm eps");
    to.bn_momentum = t->add_option("--bn-momentum", tr.flags.bn_momentum, "Logit batch-norm momentum");
    to.se_reduction = t->add_option("--se-reduction", tr.flags.se_reduction, "SE reduction ratio");
    to.l2 = t->add_flag("--l2-normalize", tr.l2_normalize, "Unit-normalize features before the QuIC head");
    to.no_logit_bn = t->add_flag("--no-logit-bn", tr.no_logit_bn, "Disable batch norm on QuIC scores");
    to.freeze = t->add_flag("--freeze-interaction", tr.freeze_interaction, "Keep A fixed at its initial value");
    to.split_seed =
        t->add_option("--split-seed", tr.split_seed, "Seed of the stratified train/test split")->capture_default_str();
    to.train_fraction =
        t->add_option("--train-fraction", tr.train_fraction, "Training share of each class")->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--out", ev.out, "Output directory for report.json and confusion.csv")->required();
    e->add_option("--split", ev.split, "test, train or all")->capture_default_str();

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "Audit parameter counts, activation memory and head step time");
    b->add_option("--batch", be.dims.batch, "Batch size B")->capture_default_str();
    b->add_option("--features", be.dims.features, "Feature width C")->capture_default_str();
    b->add_option("--classes", be.dims.classes, "Classes K")->capture_default_str();
    b->add_option("--side", be.dims.side, "Feature map side (1 = pooled features)")->capture_default_str();
    b->add_option("--se-reduction", be.dims.se_reduction, "SE reduction ratio")->capture_default_str();
    b->add_option("--trials", be.opts.trials, "Timed trials (>= 5)")->capture_default_str();
    b->add_option("--warmup", be.opts.warmup, "Warmup steps")->capture_default_str();
    b->add_option("--min-trial-ms", be.opts.min_trial_ms, "Minimum duration of one trial")->capture_default_str();
    b->add_option("--heads", be.heads, "Comma-separated head kinds")->capture_default_str();
    b->add_option("--out", be.out, "audit.csv path")->capture_default_str();

    ExportArgs ex;
    auto* x = app.add_subcommand("export-embeddings", "Write backbone features per sample as CSV");
    x->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
    x->add_option("--data", ex.data, "Dataset directory")->required();
    x->add_option("--out", ex.out, "Output CSV path")->required();
    x->add_option("--split", ex.split, "all, train or test")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        std::ostringstream o, r;
        const int code = app.exit(pe, o, r);
        out << o.str();
        err << r.str();
        return code == 0 ? ok : config_error;
    }

    try {
        if (g->parsed()) return cmd_gen(gen, out);
        if (t->parsed()) return cmd_train(tr, to, out, err);
        if (e->parsed()) return cmd_eval(ev, out);
        if (b->parsed()) return cmd_bench(be, out);
        if (x->parsed()) return cmd_export(ex, out);
    } catch (const ConfigError& ex_) {
        err << "config error: " << ex_.what() << "\n";
        return config_error;
    } catch (const UsageError& ex_) {
        err << "config error: " << ex_.what() << "\n";
        return config_error;
    } catch (const ResourceError& ex_) {
        err << "config error: " << ex_.what() << "\n";
        return config_error;
    } catch (const DivergenceError& ex_) {
        err << "error: " << ex_.what() << "\n";
        return diverged;
    } catch (const Error& ex_) {
        err << "data error: " << ex_.what() << "\n";
        return data_error;
    } catch (const fs::filesystem_error& ex_) {
        err << "data error: " << ex_.what() << "\n";
        return data_error;
    } catch (const std::exception& ex_) {
        err << "error: " << ex_.what() << "\n";
        return failure;
    }
    return failure;
}

}  // namespace quic::cli
