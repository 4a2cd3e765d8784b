// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// User models map u = (u^t, u^p) to a user embedding that conditions the
// policy as a soft prompt. The implicit part depends on the identifier
// only and encodes an assumption about how preferences are shared:
//
//   Uniform         every user gets the same slab (T_u may be 0)
//   Individualized  e_i = e_0 + o_i, with o_0 = 0 so user 0 gets e_0
//   Cluster         e_i = sum_k W[i,k] V_k over K shared centers
//
// The explicit part looks up u^t in the policy's own token table. The full
// embedding stacks implicit rows above explicit rows.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "plab/corpus.hpp"
#include "plab/matrix.hpp"

namespace plab {

enum class UserModelVariant { Uniform, Individualized, Cluster };

std::string_view to_string(UserModelVariant v);
/// Accepts "uniform", "individualized", "cluster"; throws ConfigError otherwise.
UserModelVariant parse_user_model_variant(std::string_view name);

struct ImplicitUserModel {
  UserModelVariant variant = UserModelVariant::Uniform;
  std::size_t num_users = 0;    // m
  std::size_t user_tokens = 0;  // T_u
  std::size_t width = 0;        // d
  std::size_t num_clusters = 0; // K, Cluster only

  /// Individualized only. When false e_0 is pinned at zero and not trained.
  bool use_generic = true;

  Matrix shared;   // Uniform: T_u x d
  Matrix generic;  // Individualized: e_0, T_u x d
  Matrix offsets;  // Individualized: (m+1)*T_u x d, slab i at rows [i*T_u, (i+1)*T_u); slab 0 stays zero
  Matrix centers;  // Cluster: K*T_u x d
  Matrix weights;  // Cluster: (m+1) x K

  /// Seeded initializers: offsets and cluster weights start at zero; the
  /// shared slab, e_0 and the centers are U(-scale, scale).
  static ImplicitUserModel uniform(std::size_t m, std::size_t t_u, std::size_t d, std::uint64_t seed,
                                   double scale = 0.1);
  static ImplicitUserModel individualized(std::size_t m, std::size_t t_u, std::size_t d, std::uint64_t seed,
                                          bool use_generic = true, double scale = 0.1);
  static ImplicitUserModel cluster(std::size_t m, std::size_t t_u, std::size_t d, std::size_t k,
                                   std::uint64_t seed, double scale = 0.1);

  friend bool operator==(const ImplicitUserModel&, const ImplicitUserModel&) = default;
};

/// Zero-valued model with the same shape; used as a gradient accumulator.
ImplicitUserModel zeros_like(const ImplicitUserModel& model);

/// Throws ValidationError on inconsistent shapes or a nonzero o_0.
void validate_user_model(const ImplicitUserModel& model);

/// T_u x d implicit embedding. DomainError when user_id > m.
Matrix implicit_embed(const ImplicitUserModel& model, std::uint32_t user_id);

/// Accumulates the gradient of a loss with respect to the model's tensors,
/// given dL/d(implicit_embed(user_id)).
void implicit_embed_backprop(const ImplicitUserModel& model, std::uint32_t user_id, const Matrix& grad_rows,
                             ImplicitUserModel& grad);

/// Text-token lookup into the policy's embedding table.
class ExplicitUserModel {
 public:
  explicit ExplicitUserModel(const Matrix& token_table) : table_(&token_table) {}

  /// |u^t| x d; empty input gives a 0-row matrix.
  Matrix embed(TokenSpan text_tokens) const;
  const Matrix& table() const noexcept { return *table_; }

 private:
  const Matrix* table_;
};

Matrix explicit_embed(const ExplicitUserModel& model, TokenSpan text_tokens);

/// concat(implicit_embed(u^p), explicit_embed(u^t)), (T_u + |u^t|) x d.
Matrix embed_user(const ImplicitUserModel& implicit, const ExplicitUserModel& explicit_model,
                  const UserInfo& user);

/// Splits dL/d(embed_user) into the implicit model gradient and the
/// token-table gradient for the explicit rows.
void embed_user_backprop(const ImplicitUserModel& implicit, const UserInfo& user, const Matrix& grad_rows,
                         ImplicitUserModel& implicit_grad, Matrix& token_table_grad);

/// Frobenius norm of the stacked individualized embeddings (users 0..m)
/// minus the cluster reconstruction W V. DomainError on shape mismatch.
double cluster_low_rank_error(const ImplicitUserModel& individualized, const ImplicitUserModel& cluster);

void save_user_model(const ImplicitUserModel& model, const std::filesystem::path& path);
ImplicitUserModel load_user_model(const std::filesystem::path& path);

}  // namespace plab
