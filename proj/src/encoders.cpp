#include "mirenc/encoders.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mirenc {

Codebook::Codebook(Eigen::MatrixXd atoms, CodebookMeta meta) : atoms_(std::move(atoms)), meta_(std::move(meta))
{
    require(atoms_.rows() > 0 && atoms_.cols() > 0, "codebook must be non-empty", ErrorKind::empty_input);
    require(atoms_.allFinite(), "codebook has non-finite entries", ErrorKind::numerical);
    const double err = max_norm_error();
    require(err <= kUnitNormTolerance, "codebook columns are not unit norm (max error " + std::to_string(err) + ")",
            ErrorKind::numerical);
}

Codebook Codebook::from_unnormalized(Eigen::MatrixXd atoms, CodebookMeta meta)
{
    for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
        const double n = atoms.col(j).norm();
        require(n > 0.0 && std::isfinite(n), "codebook column " + std::to_string(j) + " cannot be normalized",
                ErrorKind::numerical);
        atoms.col(j) /= n;
    }
    return Codebook(std::move(atoms), std::move(meta));
}

double Codebook::max_norm_error() const
{
    if (atoms_.cols() == 0) return 0.0;
    return (atoms_.colwise().norm().array() - 1.0).abs().maxCoeff();
}

const char* to_string(EncoderMethod method)
{
    switch (method) {
    case EncoderMethod::lasso: return "LASSO";
    case EncoderMethod::vq: return "VQ";
    case EncoderMethod::cs: return "CS";
    case EncoderMethod::none: return "NONE";
    }
    return "?";
}

EncoderMethod parse_encoder_method(const std::string& name)
{
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    for (EncoderMethod m : {EncoderMethod::lasso, EncoderMethod::vq, EncoderMethod::cs, EncoderMethod::none})
        if (up == to_string(m)) return m;
    fail(ErrorKind::config, "unknown encoding method '" + name + "'");
}

void EncoderConfig::validate(Eigen::Index k) const
{
    switch (method) {
    case EncoderMethod::lasso:
        require(param > 0.0 && std::isfinite(param), "LASSO lambda must be positive", ErrorKind::config);
        break;
    case EncoderMethod::vq:
        require(param == std::floor(param) && param >= 1.0 && param <= static_cast<double>(k),
                "VQ tau must be an integer in [1, k]", ErrorKind::config);
        break;
    case EncoderMethod::cs:
        require(param >= 0.0 && param < 1.0, "CS theta must lie in [0, 1)", ErrorKind::config);
        break;
    case EncoderMethod::none:
        break;
    }
}

std::string EncoderConfig::id() const
{
    if (method == EncoderMethod::none) return "NONE";
    std::ostringstream os;
    os << to_string(method) << ':';
    if (method == EncoderMethod::vq) os << tau();
    else os << param;
    return os.str();
}

void AdmmSettings::validate() const
{
    require(rho > 0 && abs_tol > 0 && rel_tol > 0 && max_iter > 0, "ADMM settings must all be positive", ErrorKind::config);
}

double lasso_objective(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& x, const Eigen::VectorXd& c, double lambda)
{
    return 0.5 * (x - atoms * c).squaredNorm() + lambda * c.lpNorm<1>();
}

LassoSolver::LassoSolver(const Codebook& codebook, AdmmSettings settings)
    : atoms_(codebook.atoms()), settings_(settings)
{
    settings_.validate();
    const Eigen::Index k = atoms_.cols();
    gram_ = atoms_.transpose() * atoms_;
    Eigen::MatrixXd system = gram_;
    system.diagonal().array() += settings_.rho;
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "ADMM: cannot factorize D^T D + rho I");
    system_inverse_ = llt.solve(Eigen::MatrixXd::Identity(k, k));
}

namespace {

// Objective of a sparse iterate without forming the dense product.
double sparse_objective(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& x, const Eigen::VectorXd& z, double lambda)
{
    Eigen::VectorXd residual = x;
    double l1 = 0.0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        if (z[j] != 0.0) {
            residual.noalias() -= z[j] * atoms.col(j);
            l1 += std::abs(z[j]);
        }
    }
    return 0.5 * residual.squaredNorm() + lambda * l1;
}

} // namespace

LassoResult LassoSolver::solve(const Eigen::VectorXd& x, double lambda) const
{
    require(x.size() == atoms_.rows(), "lasso_encode: frame dimension does not match codebook");
    require(lambda > 0.0, "lasso_encode: lambda must be positive");
    const Eigen::Index k = atoms_.cols();
    const Eigen::VectorXd q = atoms_.transpose() * x;

    LassoResult result;
    // c = 0 is optimal exactly when ||D^T x||_inf <= lambda.
    if (q.cwiseAbs().maxCoeff() <= lambda) {
        result.code = Eigen::VectorXd::Zero(k);
        result.converged = true;
        return result;
    }

    const double rho = settings_.rho;
    const double kappa = lambda / rho;
    const double sqrt_k = std::sqrt(static_cast<double>(k));
    Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd c(k), v(k), z_old(k);
    Eigen::VectorXd best = z;
    double best_obj = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= settings_.max_iter; ++it) {
        v = q + rho * (z - u);
        c.noalias() = system_inverse_ * v;
        z_old = z;
        v = c + u;
        z = v.unaryExpr([kappa](double s) { return s > kappa ? s - kappa : (s < -kappa ? s + kappa : 0.0); });
        u = v - z;

        const double obj = sparse_objective(atoms_, x, z, lambda);
        if (obj < best_obj) {
            best_obj = obj;
            best = z;
        }

        const double r_norm = (c - z).norm();
        const double s_norm = rho * (z - z_old).norm();
        const double eps_pri = sqrt_k * settings_.abs_tol + settings_.rel_tol * std::max(c.norm(), z.norm());
        const double eps_dual = sqrt_k * settings_.abs_tol + settings_.rel_tol * rho * u.norm();
        result.iterations = it;
        if (r_norm <= eps_pri && s_norm <= eps_dual) {
            result.converged = true;
            break;
        }
    }
    result.code = result.converged ? z : best;
    if (!settings_.polish) return result;
    result = polish(x, q, std::move(result), lambda);
    // polish gives up on oversized or cycling supports; finish those with
    // coordinate descent and try the active-set solve once more
    if (kkt_violation(q, result.code, lambda) > 1e-6 * std::max(1.0, lambda)) {
        result.code = coordinate_descent(q, std::move(result.code), lambda);
        for (Eigen::Index j = 0; j < k; ++j)
            if (std::abs(result.code[j]) < 1e-12) result.code[j] = 0.0;
        result = polish(x, q, std::move(result), lambda);
    }
    return result;
}

double LassoSolver::kkt_violation(const Eigen::VectorXd& q, const Eigen::VectorXd& c, double lambda) const
{
    const Eigen::VectorXd g = q - gram_ * c;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
        const double v = c[j] == 0.0 ? std::abs(g[j]) - lambda : std::abs(g[j] - (c[j] > 0.0 ? lambda : -lambda));
        worst = std::max(worst, v);
    }
    return worst;
}

Eigen::VectorXd LassoSolver::coordinate_descent(const Eigen::VectorXd& q, Eigen::VectorXd c, double lambda) const
{
    // cyclic updates on g = D^T (x - D c), kept current incrementally
    Eigen::VectorXd g = q - gram_ * c;
    const double tol = 1e-9 * std::max(1.0, lambda);
    for (int sweep = 0; sweep < 2000; ++sweep) {
        double largest_step = 0.0;
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            const double a = gram_(j, j);
            const double target = g[j] + a * c[j];
            const double next = (target > lambda ? target - lambda : (target < -lambda ? target + lambda : 0.0)) / a;
            const double step = next - c[j];
            if (step != 0.0) {
                g.noalias() -= step * gram_.col(j);
                c[j] = next;
                largest_step = std::max(largest_step, std::abs(step));
            }
        }
        if (largest_step <= tol) break;
    }
    return c;
}

LassoResult LassoSolver::polish(const Eigen::VectorXd& x, const Eigen::VectorXd& q, LassoResult admm,
                                double lambda) const
{
    // Active-set refinement seeded with the ADMM support. Each round solves the
    // equality-constrained problem on the support, drops coefficients whose sign
    // flipped, or adds the worst KKT violator. Only a point passing the full
    // optimality check replaces the ADMM iterate.
    std::vector<Eigen::Index> support;
    std::vector<double> signs;
    for (Eigen::Index j = 0; j < admm.code.size(); ++j)
        if (admm.code[j] != 0.0) {
            support.push_back(j);
            signs.push_back(admm.code[j] > 0.0 ? 1.0 : -1.0);
        }
    if (static_cast<Eigen::Index>(support.size()) > atoms_.rows()) {
        // some optimum has at most d nonzeros; start from the d largest
        std::vector<std::size_t> order(support.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(admm.code[support[a]]) > std::abs(admm.code[support[b]]);
        });
        order.resize(static_cast<std::size_t>(atoms_.rows()));
        std::sort(order.begin(), order.end());
        std::vector<Eigen::Index> trimmed;
        std::vector<double> trimmed_signs;
        for (std::size_t i : order) {
            trimmed.push_back(support[i]);
            trimmed_signs.push_back(signs[i]);
        }
        support = std::move(trimmed);
        signs = std::move(trimmed_signs);
    }
    const double slack = lambda * (1.0 + 1e-9) + 1e-12;
    const int max_rounds = 2 * static_cast<int>(atoms_.rows()) + 4;

    for (int round = 0; round < max_rounds; ++round) {
        const auto s = static_cast<Eigen::Index>(support.size());
        if (s == 0 || s > atoms_.rows()) return admm;
        Eigen::MatrixXd sub(atoms_.rows(), s);
        Eigen::VectorXd rhs(s);
        for (Eigen::Index i = 0; i < s; ++i) {
            const Eigen::Index j = support[static_cast<std::size_t>(i)];
            sub.col(i) = atoms_.col(j);
            rhs[i] = q[j] - lambda * signs[static_cast<std::size_t>(i)];
        }
        Eigen::LLT<Eigen::MatrixXd> llt(sub.transpose() * sub);
        if (llt.info() != Eigen::Success) return admm;
        const Eigen::VectorXd coef = llt.solve(rhs);
        if (!coef.allFinite()) return admm;

        std::vector<Eigen::Index> kept;
        std::vector<double> kept_signs;
        for (Eigen::Index i = 0; i < s; ++i)
            if (coef[i] * signs[static_cast<std::size_t>(i)] > 0.0) {
                kept.push_back(support[static_cast<std::size_t>(i)]);
                kept_signs.push_back(signs[static_cast<std::size_t>(i)]);
            }
        if (static_cast<Eigen::Index>(kept.size()) < s) {
            support = std::move(kept);
            signs = std::move(kept_signs);
            continue;
        }

        const Eigen::VectorXd correlation = atoms_.transpose() * (x - sub * coef);
        Eigen::VectorXd code = Eigen::VectorXd::Zero(atoms_.cols());
        for (Eigen::Index i = 0; i < s; ++i) code[support[static_cast<std::size_t>(i)]] = coef[i];
        Eigen::Index worst = -1;
        double worst_value = slack;
        for (Eigen::Index j = 0; j < code.size(); ++j)
            if (code[j] == 0.0 && std::abs(correlation[j]) > worst_value) {
                worst_value = std::abs(correlation[j]);
                worst = j;
            }
        if (worst < 0) {
            admm.code = std::move(code);
            return admm;
        }
        support.push_back(worst);
        signs.push_back(correlation[worst] > 0.0 ? 1.0 : -1.0);
    }
    return admm;
}

LassoResult lasso_encode(const Codebook& codebook, const Eigen::VectorXd& x, double lambda,
                         const AdmmSettings& settings)
{
    return LassoSolver(codebook, settings).solve(x, lambda);
}

namespace {

// Fills `chosen` with the tau nearest codewords in ascending index order.
void select_nearest(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& sq_norms, const Eigen::VectorXd& x, int tau,
                    std::vector<Eigen::Index>& order, Eigen::VectorXd& scores, std::vector<Eigen::Index>& chosen)
{
    const Eigen::Index k = atoms.cols();
    // ||x - D_j||^2 - ||x||^2; the dropped term is common to every codeword.
    scores.noalias() = atoms.transpose() * x;
    scores = sq_norms - 2.0 * scores;

    if (tau == 1) {
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < k; ++j)
            if (scores[j] < scores[arg]) arg = j;
        chosen.assign(1, arg);
        return;
    }
    order.resize(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto closer = [&scores](Eigen::Index a, Eigen::Index b) {
        return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    };
    if (tau < k) std::nth_element(order.begin(), order.begin() + (tau - 1), order.end(), closer);
    chosen.assign(order.begin(), order.begin() + tau);
    std::sort(chosen.begin(), chosen.end());
}

} // namespace

std::vector<Eigen::Index> vq_select(const Codebook& codebook, const Eigen::VectorXd& x, int tau)
{
    require(x.size() == codebook.dim(), "vq_encode: frame dimension does not match codebook");
    EncoderConfig::vq(tau).validate(codebook.size());
    const Eigen::VectorXd sq_norms = codebook.atoms().colwise().squaredNorm().transpose();
    std::vector<Eigen::Index> order;
    Eigen::VectorXd scores(codebook.size());
    std::vector<Eigen::Index> chosen;
    select_nearest(codebook.atoms(), sq_norms, x, tau, order, scores, chosen);
    return chosen;
}

Eigen::VectorXd vq_encode(const Codebook& codebook, const Eigen::VectorXd& x, int tau)
{
    Eigen::VectorXd code = Eigen::VectorXd::Zero(codebook.size());
    for (Eigen::Index j : vq_select(codebook, x, tau)) code[j] = 1.0 / tau;
    return code;
}

Eigen::VectorXd shrink(const Eigen::VectorXd& v, double theta)
{
    return v.unaryExpr([theta](double s) { return s > theta ? s - theta : (s < -theta ? s + theta : 0.0); });
}

Eigen::VectorXd cs_encode(const Codebook& codebook, const Eigen::VectorXd& x, double theta)
{
    require(x.size() == codebook.dim(), "cs_encode: frame dimension does not match codebook");
    EncoderConfig::cs(theta).validate(codebook.size());
    const double norm = x.norm();
    if (norm == 0.0) return Eigen::VectorXd::Zero(codebook.size());
    Eigen::VectorXd sim = codebook.atoms().transpose() * x;
    sim /= norm;
    return shrink(sim, theta);
}

CodeMatrix::CodeMatrix(Eigen::MatrixXd dense) : data_(std::move(dense)) {}

CodeMatrix::CodeMatrix(Sparse sparse) : data_(std::move(sparse))
{
    std::get<Sparse>(data_).makeCompressed();
}

Eigen::Index CodeMatrix::codes() const
{
    return std::visit([](const auto& m) { return static_cast<Eigen::Index>(m.rows()); }, data_);
}

Eigen::Index CodeMatrix::frames() const
{
    return std::visit([](const auto& m) { return static_cast<Eigen::Index>(m.cols()); }, data_);
}

Eigen::MatrixXd CodeMatrix::to_dense() const
{
    if (storage() == Storage::dense) return dense();
    return Eigen::MatrixXd(sparse());
}

Eigen::VectorXd CodeMatrix::column(Eigen::Index t) const
{
    if (storage() == Storage::dense) return dense().col(t);
    return Eigen::VectorXd(sparse().col(t));
}

std::vector<Eigen::Index> CodeMatrix::nnz_per_column() const
{
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(frames()), 0);
    if (storage() == Storage::dense) {
        for (Eigen::Index t = 0; t < frames(); ++t)
            counts[static_cast<std::size_t>(t)] = (dense().col(t).array() != 0.0).count();
    } else {
        const Sparse& m = sparse();
        for (Eigen::Index t = 0; t < m.outerSize(); ++t)
            for (Sparse::InnerIterator it(m, t); it; ++it)
                if (it.value() != 0.0) ++counts[static_cast<std::size_t>(t)];
    }
    return counts;
}

double CodeMatrix::mean_nnz() const
{
    const auto counts = nnz_per_column();
    if (counts.empty()) return 0.0;
    return static_cast<double>(std::accumulate(counts.begin(), counts.end(), Eigen::Index{0})) /
           static_cast<double>(counts.size());
}

bool CodeMatrix::all_finite() const
{
    if (storage() == Storage::dense) return dense().allFinite();
    const Sparse& m = sparse();
    return std::all_of(m.valuePtr(), m.valuePtr() + m.nonZeros(), [](double v) { return std::isfinite(v); });
}

SongEncoder::SongEncoder(const Codebook& codebook, EncoderConfig config, AdmmSettings settings)
    : codebook_(codebook), config_(config)
{
    if (config_.method == EncoderMethod::none) return;
    config_.validate(codebook_.size());
    if (config_.method == EncoderMethod::lasso) lasso_.emplace(codebook_, settings);
}

CodeMatrix SongEncoder::encode(const Eigen::MatrixXd& frames) const
{
    unconverged_ = 0;
    const Eigen::Index T = frames.cols();
    if (config_.method == EncoderMethod::none) return CodeMatrix(frames);

    require(frames.rows() == codebook_.dim(), "encode_song: feature dimension " + std::to_string(frames.rows()) +
                                                 " does not match codebook dimension " +
                                                 std::to_string(codebook_.dim()));
    const Eigen::MatrixXd& atoms = codebook_.atoms();
    const Eigen::Index k = atoms.cols();

    switch (config_.method) {
    case EncoderMethod::vq: {
        const int tau = config_.tau();
        const double weight = 1.0 / tau;
        const Eigen::VectorXd sq_norms = atoms.colwise().squaredNorm().transpose();
        std::vector<Eigen::Index> order, chosen;
        Eigen::VectorXd scores(k);
        CodeMatrix::Sparse codes(k, T);
        codes.reserve(static_cast<Eigen::Index>(tau) * T);
        for (Eigen::Index t = 0; t < T; ++t) {
            codes.startVec(t);
            select_nearest(atoms, sq_norms, frames.col(t), tau, order, scores, chosen);
            for (Eigen::Index j : chosen) codes.insertBack(j, t) = weight;
        }
        codes.finalize();
        return CodeMatrix(std::move(codes));
    }
    case EncoderMethod::cs: {
        Eigen::MatrixXd codes(k, T);
        bool warned = false;
        for (Eigen::Index t = 0; t < T; ++t) {
            const double norm = frames.col(t).norm();
            if (norm == 0.0) {
                codes.col(t).setZero();
                if (!warned) log_info("cs_encode: zero frame encoded as zero code");
                warned = true;
                continue;
            }
            codes.col(t).noalias() = atoms.transpose() * frames.col(t);
            codes.col(t) /= norm;
            codes.col(t) = shrink(codes.col(t), config_.param);
        }
        return CodeMatrix(std::move(codes));
    }
    case EncoderMethod::lasso: {
        CodeMatrix::Sparse codes(k, T);
        for (Eigen::Index t = 0; t < T; ++t) {
            LassoResult r = lasso_->solve(frames.col(t), config_.param);
            if (!r.converged) ++unconverged_;
            codes.startVec(t);
            for (Eigen::Index j = 0; j < k; ++j)
                if (r.code[j] != 0.0) codes.insertBack(j, t) = r.code[j];
        }
        codes.finalize();
        if (unconverged_ > 0)
            log_info("lasso_encode: " + std::to_string(unconverged_) + " frames reached max_iter");
        return CodeMatrix(std::move(codes));
    }
    case EncoderMethod::none:
        break;
    }
    return CodeMatrix(frames);
}

CodeMatrix encode_song(const Codebook& codebook, const FrameMatrix& frames, const EncoderConfig& config,
                       const AdmmSettings& settings)
{
    return SongEncoder(codebook, config, settings).encode(frames);
}

CodeMatrix encode_song(const Codebook& codebook, const Eigen::MatrixXd& frames, const EncoderConfig& config,
                       const AdmmSettings& settings)
{
    return SongEncoder(codebook, config, settings).encode(frames);
}

} // namespace mirenc
