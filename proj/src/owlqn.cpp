#include "alseq/owlqn.hpp"

#include <cmath>
#include <cstddef>
#include <deque>

namespace alseq {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double inf_norm(std::span<const double> a) {
    double m = 0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

double l1_norm(std::span<const double> a) {
    double s = 0;
    for (double v : a) s += std::fabs(v);
    return s;
}

struct Pair {
    std::vector<double> s, y;
    double rho;
};

// pg_i is the minimal-norm subgradient of f + l1*|x| at x.
void pseudo_gradient(std::span<const double> x, std::span<const double> g, double l1,
                     std::span<double> pg) {
    if (l1 == 0.0) {
        for (std::size_t i = 0; i < x.size(); ++i) pg[i] = g[i];
        return;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0)
            pg[i] = g[i] + l1;
        else if (x[i] < 0)
            pg[i] = g[i] - l1;
        else if (g[i] + l1 < 0)
            pg[i] = g[i] + l1;
        else if (g[i] - l1 > 0)
            pg[i] = g[i] - l1;
        else
            pg[i] = 0;
    }
}

}  // namespace

OwlqnResult owlqn_minimize(const SmoothObjective& f, std::vector<double>& x,
                           const OwlqnOptions& opt) {
    const std::size_t n = x.size();
    OwlqnResult result;
    if (n == 0) {
        result.converged = true;
        return result;
    }

    std::vector<double> g(n), pg(n), dir(n), x_new(n), g_new(n);
    std::deque<Pair> history;
    std::vector<double> alphas;

    double fx = f(x, g);
    double F = fx + opt.l1 * l1_norm(x);

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        pseudo_gradient(x, g, opt.l1, pg);
        if (inf_norm(pg) <= opt.grad_tol) {
            result.converged = true;
            break;
        }

        // two-loop recursion: dir = -H * pg
        dir.assign(pg.begin(), pg.end());
        alphas.assign(history.size(), 0.0);
        for (std::size_t h = history.size(); h-- > 0;) {
            const Pair& p = history[h];
            alphas[h] = p.rho * dot(p.s, dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] -= alphas[h] * p.y[i];
        }
        if (!history.empty()) {
            const Pair& last = history.back();
            const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
            for (auto& d : dir) d *= gamma;
        }
        for (std::size_t h = 0; h < history.size(); ++h) {
            const Pair& p = history[h];
            const double beta = p.rho * dot(p.y, dir);
            for (std::size_t i = 0; i < n; ++i) dir[i] += (alphas[h] - beta) * p.s[i];
        }
        for (auto& d : dir) d = -d;

        // keep the direction inside the steepest-descent orthant
        if (opt.l1 > 0)
            for (std::size_t i = 0; i < n; ++i)
                if (dir[i] * -pg[i] <= 0) dir[i] = 0;

        double dg = dot(pg, dir);
        if (!(dg < 0)) {  // stale curvature; fall back to steepest descent
            history.clear();
            for (std::size_t i = 0; i < n; ++i) dir[i] = -pg[i];
            dg = -dot(pg, pg);
            if (dg == 0) {
                result.converged = true;
                break;
            }
        }

        double alpha = history.empty() ? 1.0 / std::max(1.0, norm2(dir)) : 1.0;
        double F_new = 0, fx_new = 0;
        bool accepted = false;
        for (int bt = 0; bt < opt.max_backtracks; ++bt) {
            for (std::size_t i = 0; i < n; ++i) {
                double xi = x[i] + alpha * dir[i];
                if (opt.l1 > 0) {
                    // stay in the orthant picked by x (or by -pg where x is 0)
                    const double ref = x[i] != 0.0 ? x[i] : -pg[i];
                    if (xi * ref < 0) xi = 0;
                }
                x_new[i] = xi;
            }
            fx_new = f(x_new, g_new);
            F_new = fx_new + opt.l1 * l1_norm(x_new);
            double gain = 0;
            for (std::size_t i = 0; i < n; ++i) gain += pg[i] * (x_new[i] - x[i]);
            if (F_new <= F + opt.c1 * gain) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // no acceptable step; stop at the current point

        Pair p;
        p.s.resize(n);
        p.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            p.s[i] = x_new[i] - x[i];
            p.y[i] = g_new[i] - g[i];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-10 * norm2(p.s) * norm2(p.y)) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (static_cast<int>(history.size()) > opt.memory) history.pop_front();
        }

        const double prev_F = F;
        x.swap(x_new);
        g.swap(g_new);
        fx = fx_new;
        F = F_new;
        result.iterations = iter;
        if (std::fabs(prev_F - F) <= opt.obj_tol * std::max(1.0, std::fabs(F))) {
            result.converged = true;
            break;
        }
    }

    result.objective = F;
    return result;
}

}  // namespace alseq
