#pragma once

// HTTP API over a loaded model for interactive mode exploration and editing.
//
// Mesh payload schema (all mesh-returning endpoints):
//   {"n_vertices": V, "n_triangles": T, "resolution": R,
//    "vertices": [x0, y0, z0, x1, ...]   (3V numbers),
//    "indices":  [a0, b0, c0, a1, ...]   (3T zero-based vertex indices)}
// Errors are {"error": message} with an HTTP status code.

#include "genie/edit.hpp"
#include "genie/mesher.hpp"

#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace genie {

struct ServiceOptions {
  std::size_t spectrum_points = 20000;
  std::uint64_t spectrum_seed = 0;
  Box bounds{};
  int resolution_cap = 128;
  int default_resolution = 64;
  std::string cors_origin = "*";
  std::string checkpoint_path;          // never overwritten by /api/export
  std::filesystem::path export_root;    // relative export paths resolve here
};

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what, nlohmann::json extra = nlohmann::json::object())
      : Error(what), status_(status), extra_(std::move(extra)) {}
  int status() const { return status_; }
  const nlohmann::json& extra() const { return extra_; }

 private:
  int status_;
  nlohmann::json extra_;
};

inline nlohmann::json mesh_json(const Mesh& m, int resolution) {
  std::vector<double> v;
  v.reserve(m.vertices.size() * 3);
  for (const auto& p : m.vertices) v.insert(v.end(), {p.x(), p.y(), p.z()});
  std::vector<std::size_t> idx;
  idx.reserve(m.triangles.size() * 3);
  for (const auto& t : m.triangles) idx.insert(idx.end(), t.begin(), t.end());
  return {{"n_vertices", m.vertices.size()}, {"n_triangles", m.triangles.size()},
          {"resolution", resolution}, {"vertices", std::move(v)}, {"indices", std::move(idx)}};
}

class Service {
 public:
  using json = nlohmann::json;

  Service(Model model, ServiceOptions opt) : opt_(std::move(opt)) {
    model.validate();
    const Points pts = sample(SamplingSpec::volume(opt_.spectrum_points, opt_.spectrum_seed, opt_.bounds),
                              model_field(model, 0));
    spectrum_ = spectrum_of(build_feature_matrix(model, pts));
    model_ = std::make_shared<const Model>(std::move(model));
    routes();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::shared_ptr<const Model> snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return model_;
  }
  const GramSpectrum& spectrum() const { return spectrum_; }

  /// Binds the port (0 picks a free one) and returns it. Throws on conflict.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      const int p = server_.bind_to_any_port(host);
      if (p <= 0) throw Error("cannot bind " + host + " to any port");
      port_ = p;
    } else {
      if (!server_.bind_to_port(host, port))
        throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port in use or not permitted)");
      port_ = port;
    }
    return port_;
  }

  /// Blocks serving requests on the bound port.
  void serve() { server_.listen_after_bind(); }

  /// Binds and serves on a background thread.
  int start(const std::string& host, int port) {
    const int p = bind(host, port);
    thread_ = std::thread([this] { serve(); });
    server_.wait_until_ready();
    return p;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  // Handlers, callable without HTTP. Each returns the response body or throws HttpError.

  json model_info() const {
    const auto m = snapshot();
    json heads = json::array();
    for (std::size_t i = 0; i < m->n_heads(); ++i) heads.push_back({{"index", i}, {"label", m->heads[i].label}});
    std::lock_guard lock(edit_mu_);
    return {{"input_dim", m->input_dim}, {"hidden_dim", m->hidden_dim}, {"depth", m->depth},
            {"omega0", m->omega0}, {"heads", heads}, {"edits", log_.size()}};
  }

  json modes(std::int64_t k) const {
    if (k < 0) throw HttpError(400, "k must be >= 0");
    const auto dim = static_cast<std::int64_t>(spectrum_.dim());
    const auto n = std::min(k, dim);
    std::vector<double> vals(spectrum_.eigenvalues.data(), spectrum_.eigenvalues.data() + n);
    return {{"requested", k}, {"k", n}, {"clamped", k > dim}, {"rank", spectrum_.rank()},
            {"n_points", opt_.spectrum_points}, {"seed", opt_.spectrum_seed}, {"eigenvalues", vals}};
  }

  json mesh(const json& req) const {
    const auto m = snapshot();
    const auto head = field<std::size_t>(req, "head", 0);
    check_head(*m, head);
    const int res = resolution(req.contains("resolution") ? field<int>(req, "resolution", 0) : opt_.default_resolution);
    Vec dir = Vec::Zero(static_cast<Eigen::Index>(m->hidden_dim));
    if (req.contains("coefficients")) {
      const auto& cs = req["coefficients"];
      if (!cs.is_array()) throw HttpError(400, "coefficients must be a list of [k, alpha]");
      for (const auto& kv : cs) {
        if (!kv.is_array() || kv.size() != 2 || !kv[0].is_number_integer() || !kv[1].is_number())
          throw HttpError(400, "coefficients must be a list of [k, alpha]");
        const auto k = kv[0].get<std::int64_t>();
        if (k < 0 || k >= spectrum_.dim()) throw HttpError(422, "mode index " + std::to_string(k) + " out of range");
        dir += kv[1].get<double>() * spectrum_.eigenvectors.col(k);
      }
    }
    const Mesh mesh = marching_cubes(perturbed_field(m, head, dir), opt_.bounds, res);
    return mesh_json(mesh, res);
  }

  json solve(const json& req) {
    if (!req.contains("points") || !req["points"].is_array()) throw HttpError(400, "points must be a list of [x, y, z]");
    if (!req.contains("targets") || !req["targets"].is_array()) throw HttpError(400, "targets must be a list of numbers");
    const auto& p = req["points"];
    const auto& y = req["targets"];
    if (p.size() != y.size())
      throw HttpError(422, "points (" + std::to_string(p.size()) + ") and targets (" + std::to_string(y.size()) +
                               ") differ in length");
    if (p.empty()) throw HttpError(422, "no points");
    Points x(3, static_cast<Eigen::Index>(p.size()));
    Vec t(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p[i].is_array() || p[i].size() != 3) throw HttpError(400, "point " + std::to_string(i) + " is not [x, y, z]");
      for (int a = 0; a < 3; ++a) {
        if (!p[i][a].is_number()) throw HttpError(400, "point " + std::to_string(i) + " is not numeric");
        x(a, static_cast<Eigen::Index>(i)) = p[i][a].get<double>();
      }
      if (!y[i].is_number()) throw HttpError(400, "target " + std::to_string(i) + " is not numeric");
      t[static_cast<Eigen::Index>(i)] = y[i].get<double>();
    }
    const auto m = snapshot();
    const auto h = build_feature_matrix(*m, x);
    double ridge = default_ridge(gram_of(h.data));
    if (req.contains("ridge") && !req["ridge"].is_null()) {
      if (!req["ridge"].is_number() || req["ridge"].get<double>() < 0.0) throw HttpError(422, "ridge must be >= 0");
      ridge = req["ridge"].get<double>();
    }
    EditSolution sol;
    try {
      sol = solve_edit(h.data, t, ridge);
    } catch (const NumericalError& e) {
      throw HttpError(422, e.what());
    }
    std::lock_guard lock(edit_mu_);
    const std::string id = "s" + std::to_string(++next_id_);
    json out{{"solution_id", id}, {"eta", sol.eta}, {"norm", sol.delta_theta.norm()},
             {"residual_norm", sol.residual.norm()}, {"ridge", sol.ridge}, {"n_points", p.size()}};
    solutions_.emplace(id, std::move(sol));
    return out;
  }

  json apply(const json& req) {
    if (!req.contains("solution_id") || !req["solution_id"].is_string()) throw HttpError(400, "solution_id required");
    const auto id = req["solution_id"].get<std::string>();
    const auto head = field<std::size_t>(req, "head", 0);
    const bool as_new = req.contains("new_head") && req["new_head"].is_boolean() && req["new_head"].get<bool>();
    std::lock_guard lock(edit_mu_);
    const auto it = solutions_.find(id);
    if (it == solutions_.end()) throw HttpError(404, "unknown solution '" + id + "'");
    const auto cur = snapshot();
    check_head(*cur, head);
    Model next = *cur;
    LogEntry entry{head, next.heads[head], as_new};
    if (as_new) {
      Head h = next.heads[head];
      h.weights += it->second.delta_theta;
      h.label = next.heads[head].label + "+" + id;
      next.heads.push_back(std::move(h));
    } else {
      next = apply_edit(next, head, it->second);
    }
    const std::size_t result_head = as_new ? next.n_heads() - 1 : head;
    swap_in(std::make_shared<const Model>(std::move(next)));
    log_.push_back(std::move(entry));
    return {{"head", result_head}, {"edits", log_.size()}};
  }

  json undo() {
    std::lock_guard lock(edit_mu_);
    if (log_.empty()) throw HttpError(409, "edit log is empty");
    Model next = *snapshot();
    const auto& e = log_.back();
    if (e.appended) next.heads.pop_back();
    else next.heads[e.head] = e.previous;
    swap_in(std::make_shared<const Model>(std::move(next)));
    log_.pop_back();
    return {{"edits", log_.size()}};
  }

  json blend(std::size_t a, std::size_t b, double t, int res) const {
    const auto m = snapshot();
    if (a >= m->n_heads() || b >= m->n_heads()) throw HttpError(404, "no such head");
    const int r = resolution(res);
    auto blended = std::make_shared<const Model>(blend_heads(*m, a, b, t));
    const Mesh mesh = marching_cubes(perturbed_field(blended, blended->n_heads() - 1,
                                                     Vec::Zero(static_cast<Eigen::Index>(m->hidden_dim))),
                                     opt_.bounds, r);
    return mesh_json(mesh, r);
  }

  json export_model(const json& req) const {
    if (!req.contains("path") || !req["path"].is_string() || req["path"].get<std::string>().empty())
      throw HttpError(400, "path required");
    std::filesystem::path p(req["path"].get<std::string>());
    if (p.is_relative()) p = opt_.export_root / p;
    std::error_code ec;
    if (!opt_.checkpoint_path.empty() &&
        std::filesystem::weakly_canonical(p, ec) == std::filesystem::weakly_canonical(opt_.checkpoint_path, ec))
      throw HttpError(409, "refusing to overwrite the loaded checkpoint");
    const auto m = snapshot();
    try {
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      save_model(*m, p.string());
    } catch (const std::exception& e) {
      throw HttpError(500, e.what());
    }
    return {{"path", p.string()}, {"heads", m->n_heads()}};
  }

 private:
  struct LogEntry {
    std::size_t head;
    Head previous;
    bool appended;
  };

  template <class T>
  static T field(const json& req, const char* key, T fallback) {
    if (!req.contains(key)) return fallback;
    const auto& v = req[key];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw HttpError(400, std::string(key) + " must be a non-negative integer");
    return v.get<T>();
  }

  static void check_head(const Model& m, std::size_t head) {
    if (head >= m.n_heads()) throw HttpError(404, "no head " + std::to_string(head));
  }

  int resolution(int r) const {
    if (r > opt_.resolution_cap)
      throw HttpError(422, "resolution " + std::to_string(r) + " exceeds the cap " + std::to_string(opt_.resolution_cap),
                      {{"cap", opt_.resolution_cap}});
    if (r < 2) throw HttpError(422, "resolution must be >= 2", {{"cap", opt_.resolution_cap}});
    return r;
  }

  void swap_in(std::shared_ptr<const Model> m) {
    std::lock_guard lock(snapshot_mu_);
    model_ = std::move(m);
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      auto j = json::parse(req.body);
      if (!j.is_object()) throw HttpError(400, "body must be a JSON object");
      return j;
    } catch (const json::parse_error& e) {
      throw HttpError(400, std::string("malformed JSON: ") + e.what());
    }
  }

  template <class F>
  void handle(httplib::Response& res, F&& f) {
    try {
      res.set_content(f().dump(), "application/json");
    } catch (const HttpError& e) {
      json body = e.extra();
      body["error"] = e.what();
      res.status = e.status();
      res.set_content(body.dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  static std::int64_t query_int(const httplib::Request& req, const char* key, std::optional<std::int64_t> fallback) {
    if (!req.has_param(key)) {
      if (fallback) return *fallback;
      throw HttpError(400, std::string("missing query parameter ") + key);
    }
    const auto s = req.get_param_value(key);
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw HttpError(400, std::string(key) + " must be an integer");
    return v;
  }

  static double query_real(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) throw HttpError(400, std::string("missing query parameter ") + key);
    const auto s = req.get_param_value(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw HttpError(400, std::string(key) + " must be a number");
    return v;
  }

  void routes() {
    // SO_REUSEPORT (httplib's default) would let a second server share a busy port.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server_.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [] { return json{{"status", "ok"}}; });
    });
    server_.Get("/api/model", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [this] { return model_info(); });
    });
    server_.Get("/api/modes", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return modes(query_int(req, "k", 20)); });
    });
    server_.Post("/api/mesh", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return mesh(parse_body(req)); });
    });
    server_.Post("/api/edit/solve", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return solve(parse_body(req)); });
    });
    server_.Post("/api/edit/apply", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return apply(parse_body(req)); });
    });
    server_.Post("/api/edit/undo", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] { return undo(); });
    });
    server_.Get("/api/heads/blend", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto a = query_int(req, "a", std::nullopt), b = query_int(req, "b", std::nullopt);
        if (a < 0 || b < 0) throw HttpError(404, "no such head");
        return blend(static_cast<std::size_t>(a), static_cast<std::size_t>(b), query_real(req, "t"),
                     static_cast<int>(query_int(req, "resolution", opt_.default_resolution)));
      });
    });
    server_.Post("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return export_model(parse_body(req)); });
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty())
        res.set_content(json{{"error", "status " + std::to_string(res.status)}}.dump(), "application/json");
    });
  }

  ServiceOptions opt_;
  GramSpectrum spectrum_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const Model> model_;
  mutable std::mutex edit_mu_;  // serialises solve bookkeeping, apply and undo
  std::map<std::string, EditSolution> solutions_;
  std::vector<LogEntry> log_;
  std::uint64_t next_id_ = 0;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace genie
