#include "plab/kmeans.hpp"

#include "plab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace plab {

namespace {

double sqdist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

} // namespace

KMeansResult kmeans(const Tensor& rows, int k, std::uint64_t seed, int max_iter, double tol) {
    if (rows.ndim() != 2) throw Error("kmeans: rows must be (N,D)");
    int n = rows.shape[0], d = rows.shape[1];
    if (k < 1) throw Error("kmeans: K must be >= 1");
    if (n < k) throw Error("kmeans: fewer rows than clusters");

    Rng rng(Rng::derive(seed, 0x5EED));
    const double* X = rows.data.data();

    // k-means++ seeding
    Tensor cent({k, d});
    std::vector<double> mind(n, 1e300);
    int first = rng.below_int(n);
    std::copy(X + (std::size_t)first * d, X + (std::size_t)(first + 1) * d, cent.data.begin());
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double dd = sqdist(X + (std::size_t)i * d, &cent.data[(std::size_t)(j - 1) * d], d);
            mind[i] = std::min(mind[i], dd);
            total += mind[i];
        }
        int pick = 0;
        if (total <= 0.0) {
            pick = rng.below_int(n);
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += mind[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy(X + (std::size_t)pick * d, X + (std::size_t)(pick + 1) * d,
                  cent.data.begin() + (std::size_t)j * d);
    }

    KMeansResult res;
    res.assignment.assign(n, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        double sse = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = 1e300;
            int bi = 0;
            for (int j = 0; j < k; ++j) {
                double dd = sqdist(X + (std::size_t)i * d, &cent.data[(std::size_t)j * d], d);
                if (dd < best) {
                    best = dd;
                    bi = j;
                }
            }
            res.assignment[i] = bi;
            sse += best;
        }
        res.sse_history.push_back(sse);
        res.sse = sse;

        Tensor nc({k, d});
        std::vector<int> count(k, 0);
        for (int i = 0; i < n; ++i) {
            int j = res.assignment[i];
            for (int t = 0; t < d; ++t) nc.data[(std::size_t)j * d + t] += X[(std::size_t)i * d + t];
            ++count[j];
        }
        // empty cluster: adopt the row farthest from its centroid
        for (int j = 0; j < k; ++j) {
            if (count[j] > 0) continue;
            double worst = -1.0;
            int wi = 0;
            for (int i = 0; i < n; ++i) {
                double dd = sqdist(X + (std::size_t)i * d,
                                   &cent.data[(std::size_t)res.assignment[i] * d], d);
                if (dd > worst) {
                    worst = dd;
                    wi = i;
                }
            }
            std::copy(X + (std::size_t)wi * d, X + (std::size_t)(wi + 1) * d,
                      nc.data.begin() + (std::size_t)j * d);
            count[j] = 1;
            // leave assignment to the next sweep
        }
        double shift = 0.0;
        for (int j = 0; j < k; ++j)
            for (int t = 0; t < d; ++t) {
                double nv = nc.data[(std::size_t)j * d + t] / count[j];
                shift = std::max(shift, std::fabs(nv - cent.data[(std::size_t)j * d + t]));
                cent.data[(std::size_t)j * d + t] = nv;
            }
        if (shift < tol) break;
    }
    // final assignment against the last centroids
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = 1e300;
        int bi = 0;
        for (int j = 0; j < k; ++j) {
            double dd = sqdist(X + (std::size_t)i * d, &cent.data[(std::size_t)j * d], d);
            if (dd < best) {
                best = dd;
                bi = j;
            }
        }
        res.assignment[i] = bi;
        sse += best;
    }
    res.sse = sse;
    res.centroids = std::move(cent);
    return res;
}

} // namespace plab
