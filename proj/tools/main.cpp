// l2c — logit-side pipeline CLI: corpus analysis, calibration search,
// logit-to-code mapping, synthetic corpora and the toy flow-matching decoder.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "l2c/calibration.hpp"
#include "l2c/distribution.hpp"
#include "l2c/lcdm.hpp"
#include "l2c/otsu.hpp"
#include "l2c/synth.hpp"
#include "l2c/tensor_io.hpp"
#include "l2c/toy_decoder.hpp"

using nlohmann::json;

namespace {

l2c::Mat load_mat(const std::string& path) { return l2c::tensor_to_mat(l2c::read_tensor(path)); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw l2c::input_error("cannot open output file " + path);
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path);
}

json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw l2c::input_error("cannot open " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw l2c::input_error("JSON parse error in " + path + ": " + e.what());
    }
}

l2c::TargetStats target_stats_from_json(const json& j) {
    const json& src = j.contains("target_stats") ? j.at("target_stats") : j;
    for (const char* key : {"mean_entropy", "mean_conf", "p95_conf", "p95_entropy"})
        if (!src.contains(key))
            throw l2c::input_error(std::string("target stats: missing field ") + key);
    l2c::TargetStats t;
    t.mean_entropy = src.at("mean_entropy").get<double>();
    t.mean_conf = src.at("mean_conf").get<double>();
    t.p95_conf = src.at("p95_conf").get<double>();
    t.p95_entropy = src.at("p95_entropy").get<double>();
    return t;
}

l2c::CalibrationParams params_from_json(const json& j) {
    for (const char* key : {"scale", "bias", "temperature", "smoothing"})
        if (!j.contains(key))
            throw l2c::input_error(std::string("calibration params: missing field ") + key);
    l2c::CalibrationParams p;
    p.scale = j.at("scale").get<double>();
    p.bias = j.at("bias").get<double>();
    p.temperature = j.at("temperature").get<double>();
    p.smoothing = j.at("smoothing").get<double>();
    p.validate();
    return p;
}

struct ToyCliConfig {
    l2c::TrainConfig train;
    l2c::ToyDatasetConfig data;
};

ToyCliConfig toy_config_from_json(const json& j) {
    ToyCliConfig c;
    c.train.seed = j.value("seed", uint64_t{42});
    c.train.steps = j.value("steps", 2000);
    c.train.step_size = j.value("step_size", 0.05);
    c.train.momentum = j.value("momentum", 0.9);
    c.train.batch = j.value("batch", 4);
    c.train.dims.d_theta = j.value("d_theta", size_t{16});
    c.train.dims.d_h = j.value("d_h", size_t{8});
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        c.data.k = d.value("k", c.data.k);
        c.data.d = d.value("d", c.data.d);
        c.data.latent_h = d.value("latent_h", c.data.latent_h);
        c.data.latent_w = d.value("latent_w", c.data.latent_w);
        c.data.d_z = d.value("d_z", c.data.d_z);
        c.data.rows = d.value("rows", c.data.rows);
        c.data.cols = d.value("cols", c.data.cols);
        c.data.train_items = d.value("train_items", c.data.train_items);
        c.data.test_items = d.value("test_items", c.data.test_items);
        c.data.render_noise = d.value("render_noise", c.data.render_noise);
    }
    if (c.train.steps < 1 || c.train.batch < 1)
        throw l2c::input_error("toy config: steps and batch must be >= 1");
    c.train.dims.d = c.data.d;
    c.train.dims.d_z = c.data.d_z;
    return c;
}

// The dataset stream is decoupled from the training stream so reseeding one
// never silently reshuffles the other.
uint64_t dataset_seed(const ToyCliConfig& c) { return c.train.seed + 1000003; }

int run_analyze(const std::string& input, const std::string& report_path,
                const std::string& profile_path, const std::string& weight_name, int top_n,
                double temperature) {
    l2c::Mat logits = load_mat(input);
    l2c::OtsuWeight weight =
        weight_name == "mass" ? l2c::OtsuWeight::mass : l2c::OtsuWeight::count;
    l2c::ProbGrid probs = l2c::softmax_grid(logits, temperature);
    l2c::OtsuGridReport rep = l2c::otsu_report_grid(probs, weight);
    l2c::TargetStats stats = l2c::corpus_stats({probs});

    json out = {
        {"tokens", logits.rows},
        {"vocab", logits.cols},
        {"otsu_weight", weight_name},
        {"probability_stats",
         {{"mean_top1", rep.mean_top1},
          {"mean_top2", rep.mean_top2},
          {"mean_normalized_entropy", rep.mean_norm_entropy},
          {"mean_tail_entropy", rep.mean_tail_entropy}}},
        {"otsu",
         {{"mean_threshold_prob", rep.mean_threshold_prob},
          {"mean_threshold_rank", rep.mean_threshold_rank},
          {"mean_head_mass", rep.mean_head_mass},
          {"mean_between_class_variance", rep.mean_between_class_variance}}},
        {"target_stats",
         {{"mean_entropy", stats.mean_entropy},
          {"mean_conf", stats.mean_conf},
          {"p95_conf", stats.p95_conf},
          {"p95_entropy", stats.p95_entropy}}},
    };
    write_text(report_path, out.dump(2) + "\n");

    if (!profile_path.empty()) {
        int n = std::min<int>(top_n, static_cast<int>(logits.cols));
        std::vector<double> profile = l2c::rank_profile({probs}, n);
        std::ostringstream csv;
        csv << "rank,mean_prob\n" << std::setprecision(17);
        for (size_t i = 0; i < profile.size(); ++i) csv << (i + 1) << "," << profile[i] << "\n";
        write_text(profile_path, csv.str());
    }
    std::cout << "analyzed " << logits.rows << " tokens over vocab " << logits.cols << "\n";
    return 0;
}

int run_calibrate(const std::vector<std::string>& corpus_paths, const std::string& target_path,
                  const std::string& config_path, const std::string& out_path) {
    l2c::StatsConfig cfg;
    if (!config_path.empty()) cfg = l2c::read_stats_config(config_path);
    cfg.target_stats = target_stats_from_json(read_json_file(target_path));

    std::vector<l2c::LogitGrid> corpus;
    for (const auto& p : corpus_paths) corpus.push_back(load_mat(p));

    l2c::SearchResult res = l2c::calibrate_search(corpus, cfg);

    json stages = json::array();
    for (const auto& st : res.trace)
        stages.push_back({{"stage", st.stage},
                          {"loss", st.loss},
                          {"scale", st.params.scale},
                          {"bias", st.params.bias},
                          {"temperature", st.params.temperature},
                          {"smoothing", st.params.smoothing}});
    json out = {
        {"scale", res.params.scale},
        {"bias", res.params.bias},
        {"temperature", res.params.temperature},
        {"smoothing", res.params.smoothing},
        {"final_loss", res.final_loss},
        {"non_bracketed", res.non_bracketed},
        {"bisect_entropy", res.bisect_entropy},
        {"diagnostics",
         {{"weights", {cfg.weights[0], cfg.weights[1], cfg.weights[2], cfg.weights[3]}},
          {"target",
           {{"mean_entropy", cfg.target_stats.mean_entropy},
            {"mean_conf", cfg.target_stats.mean_conf},
            {"p95_conf", cfg.target_stats.p95_conf},
            {"p95_entropy", cfg.target_stats.p95_entropy}}},
          {"stages", stages}}},
    };
    write_text(out_path, out.dump(2) + "\n");
    std::cout << "final_loss=" << std::setprecision(17) << res.final_loss
              << " scale=" << res.params.scale << " bias=" << res.params.bias
              << " temperature=" << res.params.temperature
              << " smoothing=" << res.params.smoothing << "\n";
    if (res.non_bracketed) {
        std::cerr << "warning: entropy target not bracketed by the scale range\n";
        return 3;
    }
    return 0;
}

int run_map(const std::string& logits_path, const std::string& codebook_path,
            const std::string& params_path, const std::string& out_v,
            const std::string& out_u) {
    l2c::Mat logits = load_mat(logits_path);
    l2c::Mat codebook = load_mat(codebook_path);
    l2c::CalibrationParams params = params_from_json(read_json_file(params_path));
    l2c::LcdmOutput out = l2c::lcdm_pipeline(logits, codebook, params);
    l2c::write_tensor(out_v, l2c::mat_to_tensor(out.code_vectors));
    l2c::write_tensor(out_u, l2c::mat_to_tensor(out.uncertainty));
    std::cout << "mapped " << logits.rows << " tokens to V(" << out.code_vectors.rows << "x"
              << out.code_vectors.cols << ") and U(" << out.uncertainty.rows << "x4)\n";
    return 0;
}

int run_synth(const std::string& kind, size_t n, size_t k, uint64_t seed,
              const std::string& out_path) {
    l2c::LogitGrid corpus = l2c::synth_corpus(l2c::synth_kind_from_string(kind), n, k, seed);
    l2c::write_tensor(out_path, l2c::mat_to_tensor(corpus));
    std::cout << "wrote " << kind << " corpus " << n << "x" << k << " (seed " << seed << ")\n";
    return 0;
}

int run_toy_train(const std::string& config_path, int steps_override,
                  const std::string& out_params, const std::string& out_trace) {
    ToyCliConfig cfg =
        config_path.empty() ? toy_config_from_json(json::object())
                            : toy_config_from_json(read_json_file(config_path));
    if (steps_override > 0) cfg.train.steps = steps_override;

    l2c::ToyDataset ds = l2c::make_toy_dataset(cfg.data, dataset_seed(cfg));
    l2c::TrainResult res = l2c::train(ds.train, cfg.data.rows, cfg.data.cols, cfg.train);

    std::vector<double> flat = l2c::flatten_params(res.params);
    l2c::Tensor t;
    t.dims = {flat.size()};
    t.data = flat;
    l2c::write_tensor(out_params, t);

    if (!out_trace.empty()) {
        std::ostringstream csv;
        csv << "step,loss\n" << std::setprecision(17);
        for (size_t i = 0; i < res.loss_trace.size(); ++i)
            csv << i << "," << res.loss_trace[i] << "\n";
        write_text(out_trace, csv.str());
    }

    size_t win = std::min<size_t>(100, res.loss_trace.size());
    double first = 0, last = 0;
    for (size_t i = 0; i < win; ++i) {
        first += res.loss_trace[i] / win;
        last += res.loss_trace[res.loss_trace.size() - win + i] / win;
    }
    std::cout << "steps=" << cfg.train.steps << " first_smoothed=" << first
              << " last_smoothed=" << last << " reduction=" << (1.0 - last / first) * 100.0
              << "%\n";
    return 0;
}

int run_toy_decode(const std::string& config_path, const std::string& params_path,
                   const std::string& oracle_z0_path, int steps, uint64_t seed, size_t item,
                   bool zero_cond, const std::string& out_path) {
    ToyCliConfig cfg =
        config_path.empty() ? toy_config_from_json(json::object())
                            : toy_config_from_json(read_json_file(config_path));
    l2c::NoiseSchedule schedule{steps};

    if (!oracle_z0_path.empty()) {
        // Velocity stub for the constant-velocity endpoint fixture:
        // v(z, sigma) = (z - z0)/sigma, the exact field of the linear path.
        l2c::Tensor t = l2c::read_tensor(oracle_z0_path);
        if (t.dims.size() != 3) throw l2c::input_error("oracle z0 must be a 3-d tensor");
        l2c::LatentGrid z0(t.dims[0], t.dims[1], t.dims[2]);
        z0.v = t.data;
        l2c::LatentGrid out = l2c::sample_with(
            [&](const l2c::LatentGrid& z, double sigma) {
                l2c::LatentGrid v(z.h, z.w, z.dz);
                for (size_t i = 0; i < z.v.size(); ++i) v.v[i] = (z.v[i] - z0.v[i]) / sigma;
                return v;
            },
            schedule, seed, z0.h, z0.w, z0.dz);
        l2c::Tensor ot;
        ot.dims = {out.h, out.w, out.dz};
        ot.data = out.v;
        l2c::write_tensor(out_path, ot);
        double mse = 0;
        for (size_t i = 0; i < out.v.size(); ++i) {
            double d = out.v[i] - z0.v[i];
            mse += d * d / out.v.size();
        }
        std::cout << "oracle_mse=" << std::setprecision(17) << mse << "\n";
        return 0;
    }

    if (params_path.empty())
        throw l2c::input_error("toy-decode: --params required unless --oracle-z0 is given");
    l2c::Tensor pt = l2c::read_tensor(params_path);
    if (pt.dims.size() != 1) throw l2c::input_error("params tensor must be 1-d");
    l2c::DenoiserParams params = l2c::unflatten_params(cfg.train.dims, pt.data);

    l2c::ToyDataset ds = l2c::make_toy_dataset(cfg.data, dataset_seed(cfg));
    if (item >= ds.test.size()) throw l2c::input_error("toy-decode: test item out of range");
    const l2c::TrainItem& it = ds.test[item];

    size_t dst_rows = cfg.data.latent_h / 2, dst_cols = cfg.data.latent_w / 2;
    l2c::Mat C;
    if (zero_cond) {
        C = l2c::Mat(dst_rows * dst_cols, cfg.train.dims.d_h + 4, 0.0);
    } else {
        C = l2c::build_conditioning(it.V, it.U, params, cfg.data.rows, cfg.data.cols, dst_rows,
                                    dst_cols);
    }
    l2c::LatentGrid out = l2c::sample(C, schedule, params, seed, cfg.data.latent_h,
                                      cfg.data.latent_w, cfg.data.d_z);
    l2c::Tensor ot;
    ot.dims = {out.h, out.w, out.dz};
    ot.data = out.v;
    l2c::write_tensor(out_path, ot);

    double mse = 0;
    for (size_t i = 0; i < out.v.size(); ++i) {
        double d = out.v[i] - it.z.v[i];
        mse += d * d / out.v.size();
    }
    std::cout << "item=" << item << " steps=" << steps << " conditioned=" << (!zero_cond)
              << " mse=" << std::setprecision(17) << mse << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"l2c — logit-to-code distribution pipeline"};
    app.require_subcommand(1);

    // analyze
    std::string an_input, an_report = "report.json", an_profile, an_weight = "count";
    int an_top_n = 30;
    double an_temp = 1.0;
    auto* analyze = app.add_subcommand("analyze", "Distribution + Otsu statistics of a corpus");
    analyze->add_option("--input", an_input, "N x K logits TensorFile")->required();
    analyze->add_option("--report", an_report, "output report JSON path");
    analyze->add_option("--profile", an_profile, "output rank-profile CSV path");
    analyze->add_option("--otsu-weight", an_weight, "count|mass")
        ->check(CLI::IsMember({"count", "mass"}));
    analyze->add_option("--top-n", an_top_n, "rank profile length");
    analyze->add_option("--temperature", an_temp, "softmax temperature");

    // calibrate
    std::vector<std::string> cal_corpus;
    std::string cal_target, cal_config, cal_out = "params.json";
    auto* calibrate = app.add_subcommand("calibrate", "Statistic-matching calibration search");
    calibrate->add_option("--corpus", cal_corpus, "logit corpus TensorFiles")
        ->required()
        ->expected(-1);
    calibrate->add_option("--target", cal_target, "target stats JSON")->required();
    calibrate->add_option("--config", cal_config, "StatsConfig JSON (defaults if omitted)");
    calibrate->add_option("--out", cal_out, "output params JSON path");

    // map
    std::string map_logits, map_codebook, map_params, map_v = "v.tensor", map_u = "u.tensor";
    auto* map_cmd = app.add_subcommand("map", "Logit-to-code distributional mapping");
    map_cmd->add_option("--logits", map_logits, "N x K logits TensorFile")->required();
    map_cmd->add_option("--codebook", map_codebook, "K x D codebook TensorFile")->required();
    map_cmd->add_option("--params", map_params, "calibration params JSON")->required();
    map_cmd->add_option("--out-v", map_v, "output code vector TensorFile");
    map_cmd->add_option("--out-u", map_u, "output uncertainty TensorFile");

    // synth
    std::string sy_kind, sy_out = "corpus.tensor";
    size_t sy_n = 100, sy_k = 16384;
    uint64_t sy_seed = 1;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic logit corpus");
    synth->add_option("--kind", sy_kind, "sharp|flat|cosine")
        ->required()
        ->check(CLI::IsMember({"sharp", "flat", "cosine"}));
    synth->add_option("--n", sy_n, "token count");
    synth->add_option("--k", sy_k, "vocab size");
    synth->add_option("--seed", sy_seed, "RNG seed");
    synth->add_option("--out", sy_out, "output TensorFile");

    // toy-train
    std::string tt_config, tt_params = "toy_params.tensor", tt_trace;
    int tt_steps = 0;
    auto* toy_train = app.add_subcommand("toy-train", "Train the toy flow-matching decoder");
    toy_train->add_option("--config", tt_config, "training config JSON (defaults if omitted)");
    toy_train->add_option("--steps", tt_steps, "override step count");
    toy_train->add_option("--out-params", tt_params, "output params TensorFile");
    toy_train->add_option("--out-trace", tt_trace, "output loss trace CSV");

    // toy-decode
    std::string td_config, td_params, td_oracle, td_out = "sample.tensor";
    int td_steps = 20;
    uint64_t td_seed = 1000;
    size_t td_item = 0;
    bool td_zero = false;
    auto* toy_decode = app.add_subcommand("toy-decode", "Euler-sample the toy decoder");
    toy_decode->add_option("--config", td_config, "training config JSON (defaults if omitted)");
    toy_decode->add_option("--params", td_params, "trained params TensorFile");
    toy_decode->add_option("--oracle-z0", td_oracle, "use the oracle velocity stub toward z0");
    toy_decode->add_option("--steps", td_steps, "denoising steps")->check(CLI::PositiveNumber);
    toy_decode->add_option("--seed", td_seed, "sampling seed");
    toy_decode->add_option("--item", td_item, "held-out item index");
    toy_decode->add_flag("--zero-cond", td_zero, "zero the conditioning tensor");
    toy_decode->add_option("--out", td_out, "output sample TensorFile");

    try {
        app.parse(argc, argv);
        if (*analyze)
            return run_analyze(an_input, an_report, an_profile, an_weight, an_top_n, an_temp);
        if (*calibrate) return run_calibrate(cal_corpus, cal_target, cal_config, cal_out);
        if (*map_cmd) return run_map(map_logits, map_codebook, map_params, map_v, map_u);
        if (*synth) return run_synth(sy_kind, sy_n, sy_k, sy_seed, sy_out);
        if (*toy_train) return run_toy_train(tt_config, tt_steps, tt_params, tt_trace);
        if (*toy_decode)
            return run_toy_decode(td_config, td_params, td_oracle, td_steps, td_seed, td_item,
                                  td_zero, td_out);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const l2c::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
