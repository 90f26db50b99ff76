#include "metalora/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace metalora {
namespace {

Matrix matrix_checked(const Json& j, const char* who) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw config_error(std::string(who) + ": matrix needs rows/cols/data");
  const long rows = j["rows"].get<long>();
  const long cols = j["cols"].get<long>();
  const auto& data = j["data"];
  if (rows < 0 || cols < 0 || static_cast<long>(data.size()) != rows * cols)
    throw config_error(std::string(who) + ": matrix data length mismatch");
  Matrix m(rows, cols);
  long idx = 0;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = data[static_cast<size_t>(idx++)].get<double>();
  return m;
}

std::vector<Matrix> matrix_list_from_json(const Json& j, const char* who) {
  std::vector<Matrix> out;
  for (const auto& e : j) out.push_back(matrix_checked(e, who));
  return out;
}

Json matrix_list_to_json(const std::vector<Matrix>& ms) {
  Json j = Json::array();
  for (const Matrix& m : ms) j.push_back(to_json(m));
  return j;
}

}  // namespace

Json to_json(const Matrix& m) {
  Json data = Json::array();
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const Json& j) { return matrix_checked(j, "matrix_from_json"); }

Json to_json(const RngSpec& s) {
  return Json{{"master_seed", s.master_seed}, {"stream_id", s.stream_id}};
}

RngSpec rng_spec_from_json(const Json& j) {
  RngSpec s;
  s.master_seed = j.value("master_seed", std::uint64_t{0});
  s.stream_id = j.value("stream_id", std::uint64_t{0});
  return s;
}

Json to_json(const GroundTruth& gt) {
  return Json{{"a_star", to_json(gt.a_star)},
              {"u_star", matrix_list_to_json(gt.u_star)},
              {"d", gt.d},
              {"k", gt.k},
              {"T", gt.T}};
}

GroundTruth ground_truth_from_json(const Json& j) {
  return GroundTruth::from_parts(matrix_checked(j.at("a_star"), "ground_truth"),
                                 matrix_list_from_json(j.at("u_star"), "ground_truth"));
}

Json to_json(const TaskDataset& data) {
  return Json{{"x", to_json(data.x)},
              {"y", to_json(data.y)},
              {"task_index", data.task_index},
              {"sigma_eps", data.sigma_eps},
              {"sigma_x", data.sigma_x}};
}

TaskDataset task_dataset_from_json(const Json& j) {
  TaskDataset d;
  d.x = matrix_checked(j.at("x"), "task_dataset");
  d.y = matrix_checked(j.at("y"), "task_dataset");
  if (d.x.cols() != d.y.cols() || d.x.rows() != d.y.rows())
    throw config_error("task_dataset: x and y shapes disagree");
  d.task_index = j.value("task_index", 1);
  d.sigma_eps = j.value("sigma_eps", 0.0);
  d.sigma_x = j.value("sigma_x", 1.0);
  return d;
}

Json to_json(const MetaParams& p) {
  return Json{{"a", to_json(p.a)}, {"u", matrix_list_to_json(p.u)}};
}

MetaParams meta_params_from_json(const Json& j) {
  MetaParams p;
  p.a = matrix_checked(j.at("a"), "meta_params");
  p.u = matrix_list_from_json(j.at("u"), "meta_params");
  for (const Matrix& m : p.u)
    if (m.rows() != p.a.rows()) throw config_error("meta_params: factor row count mismatch");
  return p;
}

Json to_json(const Adapter& a) {
  return Json{{"u", to_json(a.u)}, {"v", to_json(a.v)}, {"rank", a.rank}};
}

Adapter adapter_from_json(const Json& j) {
  Adapter a;
  a.u = matrix_checked(j.at("u"), "adapter");
  a.v = matrix_checked(j.at("v"), "adapter");
  a.rank = j.value("rank", static_cast<int>(a.u.cols()));
  return a;
}

Json to_json(const TrainConfig& c) {
  return Json{{"learning_rate", c.learning_rate},
              {"max_iters", c.max_iters},
              {"grad_tol", c.grad_tol},
              {"init_scale", c.init_scale},
              {"perturbation_radius", c.perturbation_radius},
              {"stall_window", c.stall_window},
              {"multistarts", c.multistarts}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.grad_tol = j.value("grad_tol", c.grad_tol);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.perturbation_radius = j.value("perturbation_radius", c.perturbation_radius);
  c.stall_window = j.value("stall_window", c.stall_window);
  c.multistarts = j.value("multistarts", c.multistarts);
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json j{{"d", c.d},
         {"k", c.k},
         {"T", c.T},
         {"n_retrain", c.n_retrain},
         {"n_finetune", c.n_finetune},
         {"sigma_eps", c.sigma_eps},
         {"sigma_x", c.sigma_x},
         {"trials", c.trials},
         {"train", to_json(c.train)},
         {"master_seed", c.master_seed}};
  if (c.rank_policy == RankPolicy::PaperDefault)
    j["finetune_rank_policy"] = "PaperDefault";
  else
    j["finetune_rank_policy"] = c.fixed_rank;
  if (c.sweep)
    j["sweep"] = Json{{"axis", c.sweep->axis}, {"values", c.sweep->values}};
  else
    j["sweep"] = nullptr;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw config_error("experiment config: expected a JSON object");
  c.d = j.value("d", c.d);
  c.k = j.value("k", c.k);
  c.T = j.value("T", c.T);
  c.n_retrain = j.value("n_retrain", c.n_retrain);
  c.n_finetune = j.value("n_finetune", c.n_finetune);
  c.sigma_eps = j.value("sigma_eps", c.sigma_eps);
  c.sigma_x = j.value("sigma_x", c.sigma_x);
  c.trials = j.value("trials", c.trials);
  c.master_seed = j.value("master_seed", c.master_seed);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("finetune_rank_policy")) {
    const auto& p = j["finetune_rank_policy"];
    if (p.is_string() && p.get<std::string>() == "PaperDefault") {
      c.rank_policy = RankPolicy::PaperDefault;
    } else if (p.is_number_integer()) {
      c.rank_policy = RankPolicy::Fixed;
      c.fixed_rank = p.get<int>();
      if (c.fixed_rank < 1) throw config_error("finetune_rank_policy: fixed rank must be >= 1");
    } else {
      throw config_error("finetune_rank_policy: expected \"PaperDefault\" or an integer rank");
    }
  }
  if (j.contains("sweep") && !j["sweep"].is_null()) {
    SweepSpec s;
    s.axis = j["sweep"].value("axis", std::string());
    if (s.axis == "N'") s.axis = "Nprime";
    if (s.axis != "d" && s.axis != "N" && s.axis != "Nprime" && s.axis != "T")
      throw config_error("sweep axis must be one of d, N, Nprime, T; got \"" + s.axis + "\"");
    if (!j["sweep"].contains("values") || j["sweep"]["values"].empty())
      throw config_error("sweep: values list is required and must be nonempty");
    for (const auto& v : j["sweep"]["values"]) s.values.push_back(v.get<double>());
    c.sweep = std::move(s);
  }
  if (c.d < 1 || c.k < 1 || c.T < 1) throw config_error("d, k, T must be positive");
  if (c.n_retrain < 1 || c.n_finetune < 1) throw config_error("sample counts must be positive");
  if (c.trials < 1) throw config_error("trials must be positive");
  return c;
}

Json to_json(const AblationRow& r) {
  return Json{{"sweep_axis", r.sweep_axis},
              {"sweep_value", r.sweep_value},
              {"method", to_string(r.method)},
              {"trial_index", r.trial_index},
              {"retrain_loss", r.retrain_loss},
              {"population_test_loss", r.population_test_loss},
              {"seed_used", r.seed_used},
              {"converged", r.converged}};
}

Json to_json(const TrainTrace& t) {
  Json j{{"converged", t.converged},
         {"diverged", t.diverged},
         {"iterations_used", t.iterations_used},
         {"perturbations", t.perturbations},
         {"final_params", to_json(t.final_params)}};
  j["loss_first"] = t.loss_history.empty() ? nullptr : Json(t.loss_history.front());
  j["loss_final"] = t.loss_history.empty() ? nullptr : Json(t.loss_history.back());
  j["grad_norm_final"] =
      t.grad_norm_history.empty() ? nullptr : Json(t.grad_norm_history.back());
  j["history_length"] = t.loss_history.size();
  return j;
}

Json to_json(const StationaryReport& r) {
  Json j{{"grad_norm", r.grad_norm},
         {"loss_value", r.loss_value},
         {"classification", to_string(r.classification)},
         {"b_norms", r.b_norms}};
  j["min_hessian_eig"] = std::isnan(r.min_hessian_eig) ? Json(nullptr) : Json(r.min_hessian_eig);
  if (r.curvature_direction) {
    Json dir = Json::array();
    for (long i = 0; i < r.curvature_direction->size(); ++i)
      dir.push_back((*r.curvature_direction)(i));
    j["curvature_direction"] = std::move(dir);
  } else {
    j["curvature_direction"] = nullptr;
  }
  return j;
}

Json to_json(const NetCertificate& c) {
  return Json{{"center", matrix_list_to_json(c.center)},
              {"delta", c.delta},
              {"epsilon", c.epsilon},
              {"gamma", c.gamma},
              {"min_r_value", c.min_r_value},
              {"points_checked", c.points_checked},
              {"mode", to_string(c.mode)},
              {"certified", c.certified}};
}

Json to_json(const CheckResult& c) {
  return Json{{"name", c.name}, {"passed", c.passed}, {"measured", c.measured},
              {"detail", c.detail}};
}

Json to_json(const VerifyReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  return Json{{"all_passed", r.all_passed()}, {"checks", std::move(checks)}};
}

std::string format_g17(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "sweep_axis,sweep_value,method,trial,retrain_loss,test_loss,seed,converged\n";
  for (const AblationRow& r : rows) {
    out += r.sweep_axis;
    out += ',';
    out += format_g17(r.sweep_value);
    out += ',';
    out += to_string(r.method);
    out += ',';
    out += std::to_string(r.trial_index);
    out += ',';
    out += format_g17(r.retrain_loss);
    out += ',';
    out += format_g17(r.population_test_loss);
    out += ',';
    out += std::to_string(r.seed_used);
    out += ',';
    out += r.converged ? "true" : "false";
    out += '\n';
  }
  return out;
}

namespace {

struct Series {
  std::vector<double> xs, med, lo, hi;
};

Series series_for(const std::vector<AblationRow>& rows, const std::string& axis, Method m) {
  std::map<double, std::vector<double>> by_value;
  for (const AblationRow& r : rows) {
    if (r.sweep_axis != axis || r.method != m) continue;
    if (!std::isfinite(r.population_test_loss)) continue;
    by_value[r.sweep_value].push_back(r.population_test_loss);
  }
  Series s;
  for (auto& [x, losses] : by_value) {
    s.xs.push_back(x);
    s.med.push_back(median(losses));
    s.lo.push_back(quantile(losses, 0.25));
    s.hi.push_back(quantile(losses, 0.75));
  }
  return s;
}

}  // namespace

std::string sweep_plot_svg(const std::vector<AblationRow>& rows, const std::string& axis) {
  const Series meta = series_for(rows, axis, Method::MetaLoRA);
  const Series sr = series_for(rows, axis, Method::SRLoRA);
  const double width = 640, height = 440, ml = 80, mr = 20, mt = 40, mb = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series* s : {&meta, &sr})
    for (size_t i = 0; i < s->xs.size(); ++i) {
      xmin = std::min(xmin, s->xs[i]);
      xmax = std::max(xmax, s->xs[i]);
      for (double y : {s->med[i], s->lo[i], s->hi[i]})
        if (y > 0) {
          ymin = std::min(ymin, y);
          ymax = std::max(ymax, y);
        }
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 1e-12;
    ymax = 1;
  }
  const bool logx = xmin > 0 && xmax / xmin > 20.0;
  const double lx0 = logx ? std::log10(xmin) : xmin;
  const double lx1 = logx ? std::log10(xmax) : xmax;
  const double ly0 = std::log10(ymin) - 0.2, ly1 = std::log10(ymax) + 0.2;
  auto px = [&](double x) {
    const double t = lx1 > lx0 ? ((logx ? std::log10(x) : x) - lx0) / (lx1 - lx0) : 0.5;
    return ml + t * (width - ml - mr);
  };
  auto py = [&](double y) {
    const double ly = std::log10(std::max(y, 1e-300));
    const double t = (ly - ly0) / (ly1 - ly0);
    return height - mb - t * (height - mt - mb);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << "population test loss vs " << axis << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double ly = ly0 + (ly1 - ly0) * i / 4.0;
    const double y = std::pow(10.0, ly);
    char lab[32];
    std::snprintf(lab, sizeof lab, "%.1e", y);
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << ml << "\" y2=\""
        << py(y) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << lab << "</text>\n";
  }
  const std::vector<double>& ticks = meta.xs.empty() ? sr.xs : meta.xs;
  for (double x : ticks) {
    char lab[32];
    std::snprintf(lab, sizeof lab, "%g", x);
    svg << "<line x1=\"" << px(x) << "\" y1=\"" << height - mb << "\" x2=\"" << px(x)
        << "\" y2=\"" << height - mb + 4 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(x) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << lab << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\" font-size=\"13\">" << axis << (logx ? " (log)" : "")
      << "</text>\n";
  auto draw = [&](const Series& s, const char* color, const char* name, double legend_y) {
    if (!s.xs.empty()) {
      std::ostringstream band, line;
      for (size_t i = 0; i < s.xs.size(); ++i)
        band << (i ? " L" : "M") << px(s.xs[i]) << " " << py(s.hi[i]);
      for (size_t i = s.xs.size(); i-- > 0;) band << " L" << px(s.xs[i]) << " " << py(s.lo[i]);
      band << " Z";
      svg << "<path d=\"" << band.str() << "\" fill=\"" << color
          << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      for (size_t i = 0; i < s.xs.size(); ++i)
        line << (i ? " " : "") << px(s.xs[i]) << "," << py(s.med[i]);
      svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
      for (size_t i = 0; i < s.xs.size(); ++i)
        svg << "<circle cx=\"" << px(s.xs[i]) << "\" cy=\"" << py(s.med[i])
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    svg << "<rect x=\"" << width - mr - 150 << "\" y=\"" << legend_y - 10
        << "\" width=\"14\" height=\"8\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << width - mr - 130 << "\" y=\"" << legend_y
        << "\" font-size=\"12\">" << name << "</text>\n";
  };
  draw(meta, "#1f77b4", "Meta-LoRA", mt + 16);
  draw(sr, "#d62728", "SR + LoRA", mt + 34);
  svg << "<text x=\"" << ml + 6 << "\" y=\"" << mt - 6 << "\" font-size=\"10\" fill=\"#666\">"
      << "median over trials, band = interquartile range</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw io_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Json load_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw config_error("invalid JSON in " + path);
  return j;
}

}  // namespace metalora
