// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/usermodel.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "plab/errors.hpp"
#include "plab/rng.hpp"

namespace plab {
namespace {

void fill_uniform(Matrix& m, Rng& rng, double scale) {
  for (double& x : m.flat()) x = rng.uniform(-scale, scale);
}

void axpy(std::span<double> dst, std::span<const double> src, double a) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_id(const ImplicitUserModel& model, std::uint32_t user_id) {
  if (user_id > model.num_users)
    throw DomainError("user id " + std::to_string(user_id) + " outside 0.." + std::to_string(model.num_users));
}

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* field) {
  // A 0-row tensor may carry any column count.
  if (m.rows() != rows || (rows > 0 && m.cols() != cols))
    throw ValidationError(field, "expected shape " + std::to_string(rows) + "x" + std::to_string(cols));
}

}  // namespace

std::string_view to_string(UserModelVariant v) {
  switch (v) {
    case UserModelVariant::Uniform: return "uniform";
    case UserModelVariant::Individualized: return "individualized";
    case UserModelVariant::Cluster: return "cluster";
  }
  return "unknown";
}

UserModelVariant parse_user_model_variant(std::string_view name) {
  if (name == "uniform") return UserModelVariant::Uniform;
  if (name == "individualized") return UserModelVariant::Individualized;
  if (name == "cluster") return UserModelVariant::Cluster;
  throw ConfigError("unknown user model variant '" + std::string(name) + "'");
}

ImplicitUserModel ImplicitUserModel::uniform(std::size_t m, std::size_t t_u, std::size_t d, std::uint64_t seed,
                                             double scale) {
  ImplicitUserModel model;
  model.variant = UserModelVariant::Uniform;
  model.num_users = m;
  model.user_tokens = t_u;
  model.width = d;
  model.shared = Matrix(t_u, d);
  Rng rng(seed);
  fill_uniform(model.shared, rng, scale);
  return model;
}

ImplicitUserModel ImplicitUserModel::individualized(std::size_t m, std::size_t t_u, std::size_t d,
                                                    std::uint64_t seed, bool use_generic, double scale) {
  ImplicitUserModel model;
  model.variant = UserModelVariant::Individualized;
  model.num_users = m;
  model.user_tokens = t_u;
  model.width = d;
  model.use_generic = use_generic;
  model.generic = Matrix(t_u, d);
  model.offsets = Matrix((m + 1) * t_u, d);
  if (use_generic) {
    Rng rng(seed);
    fill_uniform(model.generic, rng, scale);
  }
  return model;
}

ImplicitUserModel ImplicitUserModel::cluster(std::size_t m, std::size_t t_u, std::size_t d, std::size_t k,
                                             std::uint64_t seed, double scale) {
  if (k == 0) throw ConfigError("cluster user model needs K >= 1");
  ImplicitUserModel model;
  model.variant = UserModelVariant::Cluster;
  model.num_users = m;
  model.user_tokens = t_u;
  model.width = d;
  model.num_clusters = k;
  model.centers = Matrix(k * t_u, d);
  model.weights = Matrix(m + 1, k);
  Rng rng(seed);
  fill_uniform(model.centers, rng, scale);
  return model;
}

ImplicitUserModel zeros_like(const ImplicitUserModel& model) {
  ImplicitUserModel z = model;
  z.shared.fill(0.0);
  z.generic.fill(0.0);
  z.offsets.fill(0.0);
  z.centers.fill(0.0);
  z.weights.fill(0.0);
  return z;
}

void validate_user_model(const ImplicitUserModel& model) {
  const std::size_t t = model.user_tokens;
  const std::size_t d = model.width;
  switch (model.variant) {
    case UserModelVariant::Uniform:
      expect_shape(model.shared, t, d, "shared");
      break;
    case UserModelVariant::Individualized:
      expect_shape(model.generic, t, d, "generic");
      expect_shape(model.offsets, (model.num_users + 1) * t, d, "offsets");
      for (double x : model.offsets.rows_span(0, t))
        if (x != 0.0) throw ValidationError("offsets", "offset slab of user 0 must be zero");
      if (!model.use_generic)
        for (double x : model.generic.flat())
          if (x != 0.0) throw ValidationError("generic", "must be zero when the generic embedding is disabled");
      break;
    case UserModelVariant::Cluster:
      if (model.num_clusters == 0) throw ValidationError("K", "must be at least 1");
      expect_shape(model.centers, model.num_clusters * t, d, "centers");
      expect_shape(model.weights, model.num_users + 1, model.num_clusters, "weights");
      break;
  }
}

Matrix implicit_embed(const ImplicitUserModel& model, std::uint32_t user_id) {
  check_id(model, user_id);
  const std::size_t t = model.user_tokens;
  Matrix out(t, model.width);
  switch (model.variant) {
    case UserModelVariant::Uniform:
      out = model.shared;
      break;
    case UserModelVariant::Individualized:
      if (model.use_generic) out = model.generic;
      if (user_id > 0) axpy(out.flat(), model.offsets.rows_span(user_id * t, t), 1.0);
      break;
    case UserModelVariant::Cluster:
      for (std::size_t k = 0; k < model.num_clusters; ++k)
        axpy(out.flat(), model.centers.rows_span(k * t, t), model.weights(user_id, k));
      break;
  }
  return out;
}

void implicit_embed_backprop(const ImplicitUserModel& model, std::uint32_t user_id, const Matrix& grad_rows,
                             ImplicitUserModel& grad) {
  check_id(model, user_id);
  const std::size_t t = model.user_tokens;
  if (t == 0) return;
  auto g = grad_rows.rows_span(0, t);
  switch (model.variant) {
    case UserModelVariant::Uniform:
      axpy(grad.shared.flat(), g, 1.0);
      break;
    case UserModelVariant::Individualized:
      if (model.use_generic) axpy(grad.generic.flat(), g, 1.0);
      if (user_id > 0) axpy(grad.offsets.rows_span(user_id * t, t), g, 1.0);
      break;
    case UserModelVariant::Cluster:
      for (std::size_t k = 0; k < model.num_clusters; ++k) {
        auto center = model.centers.rows_span(k * t, t);
        grad.weights(user_id, k) += dot(g, center);
        axpy(grad.centers.rows_span(k * t, t), g, model.weights(user_id, k));
      }
      break;
  }
}

Matrix ExplicitUserModel::embed(TokenSpan text_tokens) const {
  Matrix out(text_tokens.size(), table_->cols());
  for (std::size_t r = 0; r < text_tokens.size(); ++r) {
    if (text_tokens[r] >= table_->rows()) throw DomainError("text token outside vocabulary");
    auto src = table_->row(text_tokens[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix explicit_embed(const ExplicitUserModel& model, TokenSpan text_tokens) { return model.embed(text_tokens); }

Matrix embed_user(const ImplicitUserModel& implicit, const ExplicitUserModel& explicit_model,
                  const UserInfo& user) {
  Matrix rows = implicit_embed(implicit, user.user_id);
  if (rows.empty()) rows = Matrix(0, explicit_model.table().cols());
  rows.append_rows(explicit_model.embed(user.text_tokens));
  return rows;
}

void embed_user_backprop(const ImplicitUserModel& implicit, const UserInfo& user, const Matrix& grad_rows,
                         ImplicitUserModel& implicit_grad, Matrix& token_table_grad) {
  implicit_embed_backprop(implicit, user.user_id, grad_rows, implicit_grad);
  const std::size_t t = implicit.user_tokens;
  for (std::size_t r = 0; r < user.text_tokens.size(); ++r)
    axpy(token_table_grad.row(user.text_tokens[r]), grad_rows.row(t + r), 1.0);
}

double cluster_low_rank_error(const ImplicitUserModel& individualized, const ImplicitUserModel& cluster) {
  if (individualized.variant != UserModelVariant::Individualized || cluster.variant != UserModelVariant::Cluster)
    throw DomainError("cluster_low_rank_error: expects an individualized and a cluster model");
  if (individualized.num_users != cluster.num_users || individualized.user_tokens != cluster.user_tokens ||
      individualized.width != cluster.width)
    throw DomainError("cluster_low_rank_error: (m, T_u, d) must match");
  double sq = 0.0;
  for (std::uint32_t i = 0; i <= individualized.num_users; ++i) {
    const Matrix a = implicit_embed(individualized, i);
    const Matrix b = implicit_embed(cluster, i);
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double diff = a.flat()[j] - b.flat()[j];
      sq += diff * diff;
    }
  }
  return std::sqrt(sq);
}

void save_user_model(const ImplicitUserModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write user-model checkpoint " + path.string());
  nlohmann::ordered_json header;
  header["variant"] = to_string(model.variant);
  header["m"] = model.num_users;
  header["T_u"] = model.user_tokens;
  header["d"] = model.width;
  if (model.variant == UserModelVariant::Cluster) header["K"] = model.num_clusters;
  if (model.variant == UserModelVariant::Individualized) header["generic"] = model.use_generic;
  out << header.dump() << '\n';
  switch (model.variant) {
    case UserModelVariant::Uniform:
      write_rows(out, model.shared);
      break;
    case UserModelVariant::Individualized:
      write_rows(out, model.generic);
      write_rows(out, model.offsets);
      break;
    case UserModelVariant::Cluster:
      write_rows(out, model.centers);
      write_rows(out, model.weights);
      break;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ImplicitUserModel load_user_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open user-model checkpoint " + path.string());
  std::string text;
  std::size_t line = 1;
  if (!std::getline(in, text)) throw ParseError(line, "missing checkpoint header");
  ImplicitUserModel model;
  try {
    auto header = nlohmann::json::parse(text);
    model.variant = parse_user_model_variant(header.at("variant").get<std::string>());
    model.num_users = header.at("m").get<std::size_t>();
    model.user_tokens = header.at("T_u").get<std::size_t>();
    model.width = header.at("d").get<std::size_t>();
    if (model.variant == UserModelVariant::Cluster) model.num_clusters = header.at("K").get<std::size_t>();
    if (model.variant == UserModelVariant::Individualized) model.use_generic = header.value("generic", true);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, e.what());
  } catch (const ConfigError& e) {
    throw ParseError(line, e.what());
  }
  const std::size_t t = model.user_tokens;
  const std::size_t d = model.width;
  switch (model.variant) {
    case UserModelVariant::Uniform:
      model.shared = Matrix(t, d);
      read_rows(in, model.shared, line);
      break;
    case UserModelVariant::Individualized:
      model.generic = Matrix(t, d);
      model.offsets = Matrix((model.num_users + 1) * t, d);
      read_rows(in, model.generic, line);
      read_rows(in, model.offsets, line);
      break;
    case UserModelVariant::Cluster:
      model.centers = Matrix(model.num_clusters * t, d);
      model.weights = Matrix(model.num_users + 1, model.num_clusters);
      read_rows(in, model.centers, line);
      read_rows(in, model.weights, line);
      break;
  }
  validate_user_model(model);
  return model;
}

}  // namespace plab
