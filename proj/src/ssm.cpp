#include "mxt/ssm.hpp"

#include <algorithm>
#include <atomic>
#include <limits>

#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"

namespace mxt::ssm {

namespace {

// Decay and hold factors for timesteps [t0, t1) of sequence (bi, d), written
// (t - t0, n) into decay and hold. z is scratch of the same size.
template <class T>
void fill_factors(const ScanProblem<T>& p, std::size_t bi, std::size_t d, std::size_t t0,
                  std::size_t t1, T* z, T* decay, T* hold) {
    const std::size_t N = p.state, D = p.channels, L = p.length;
    const T* arow = p.a.data() + d * N;
    for (std::size_t t = t0; t < t1; ++t) {
        const T dl = p.delta[(bi * L + t) * D + d];
        T* zr = z + (t - t0) * N;
        for (std::size_t n = 0; n < N; ++n) zr[n] = dl * arow[n];
    }
    const std::size_t count = (t1 - t0) * N;
    detail::exp_expm1(z, decay, hold, count);
    for (std::size_t t = t0; t < t1; ++t) {
        const T dl = p.delta[(bi * L + t) * D + d];
        T* hr = hold + (t - t0) * N;
        for (std::size_t n = 0; n < N; ++n) hr[n] = detail::hold_from_expm1(arow[n], dl, hr[n]);
    }
}

template <class T>
void check_size(std::span<const T> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw DimensionError(std::string("scan input '") + what + "' has " +
                             std::to_string(v.size()) + " values, expected " + std::to_string(n));
    }
}

constexpr std::size_t kMaxInlineState = 64;
constexpr std::size_t kFactorBlock = 128;

void raise_if_failed(long failed_t) {
    if (failed_t != std::numeric_limits<long>::max()) {
        throw NumericError("selective scan produced a non-finite value at timestep " +
                           std::to_string(failed_t));
    }
}

void note_failure(std::atomic<long>& failed, long t) {
    long cur = failed.load();
    while (t < cur && !failed.compare_exchange_weak(cur, t)) {
    }
}

}  // namespace

template <class T>
void ScanProblem<T>::validate() const {
    if (length == 0) throw ContractError("scan needs at least one timestep");
    const std::size_t seq = batch * length * channels;
    check_size(x, seq, "x");
    check_size(delta, seq, "delta");
    check_size(a, channels * state, "a");
    check_size(b, batch * length * state, "b");
    check_size(c, batch * length * state, "c");
    if (!skip.empty()) check_size(skip, channels, "skip");
}

template <class T>
void scan_sequential(const ScanProblem<T>& p, std::span<T> y, ScanSaved<T>* saved) {
    p.validate();
    const std::size_t B = p.batch, L = p.length, D = p.channels, N = p.state;
    check_size(std::span<const T>(y), B * L * D, "y");
    if (saved) {
        saved->h.assign(B * D * L * N, T(0));
        saved->decay.assign(B * D * L * N, T(0));
        saved->hold.assign(B * D * L * N, T(0));
    }
    std::atomic<long> failed{std::numeric_limits<long>::max()};
    const long pairs = static_cast<long>(B * D);
#pragma omp parallel
    {
        // Factors are computed a block of timesteps at a time unless they are kept.
        const std::size_t block = saved ? L : std::min(L, kFactorBlock);
        std::vector<T> z(block * N), decay_buf, hold_buf;
        if (!saved) {
            decay_buf.resize(block * N);
            hold_buf.resize(block * N);
        }
#pragma omp for schedule(static)
        for (long bd = 0; bd < pairs; ++bd) {
            const std::size_t bi = static_cast<std::size_t>(bd) / D, d = static_cast<std::size_t>(bd) % D;
            const std::size_t base = static_cast<std::size_t>(bd) * L * N;
            T h[kMaxInlineState];
            std::vector<T> h_heap;
            T* hs = h;
            if (N > kMaxInlineState) {
                h_heap.assign(N, T(0));
                hs = h_heap.data();
            } else {
                std::fill(h, h + N, T(0));
            }
            bool ok = true;
            for (std::size_t t0 = 0; t0 < L && ok; t0 += block) {
                const std::size_t t1 = std::min(L, t0 + block);
                T* decay = saved ? saved->decay.data() + base + t0 * N : decay_buf.data();
                T* hold = saved ? saved->hold.data() + base + t0 * N : hold_buf.data();
                fill_factors(p, bi, d, t0, t1, z.data(), decay, hold);
                for (std::size_t t = t0; t < t1; ++t) {
                    const std::size_t xi = (bi * L + t) * D + d;
                    const T xv = p.x[xi];
                    const T* brow = p.b.data() + (bi * L + t) * N;
                    const T* crow = p.c.data() + (bi * L + t) * N;
                    const T* dr = decay + (t - t0) * N;
                    const T* hr = hold + (t - t0) * N;
                    T acc = 0;
                    for (std::size_t n = 0; n < N; ++n) {
                        hs[n] = dr[n] * hs[n] + hr[n] * brow[n] * xv;
                        acc += crow[n] * hs[n];
                    }
                    if (!p.skip.empty()) acc += p.skip[d] * xv;
                    y[xi] = acc;
                    if (saved) std::copy(hs, hs + N, saved->h.begin() + base + t * N);
                    if (!std::isfinite(acc)) {
                        note_failure(failed, static_cast<long>(t));
                        ok = false;
                        break;
                    }
                }
            }
        }
    }
    raise_if_failed(failed.load());
}

template <class T>
void scan_chunked(const ScanProblem<T>& p, std::size_t chunk_len, std::span<T> y) {
    p.validate();
    if (chunk_len == 0) throw ContractError("scan_chunked requires chunk_len >= 1");
    const std::size_t B = p.batch, L = p.length, D = p.channels, N = p.state;
    check_size(std::span<const T>(y), B * L * D, "y");
    const std::size_t chunks = (L + chunk_len - 1) / chunk_len;
    // Per (b, d, t, n): state of the chunk-local recurrence started from zero,
    // and the running product of decays since the chunk start.
    std::vector<T> local(B * D * L * N), prod(B * D * L * N);
    const long work = static_cast<long>(B * D * chunks);

#pragma omp parallel for schedule(static)
    for (long w = 0; w < work; ++w) {
        const std::size_t bd = static_cast<std::size_t>(w) / chunks;
        const std::size_t ck = static_cast<std::size_t>(w) % chunks;
        const std::size_t bi = bd / D, d = bd % D;
        const std::size_t t0 = ck * chunk_len, t1 = std::min(L, t0 + chunk_len);
        const std::size_t count = (t1 - t0) * N;
        std::vector<T> z(count), decay(count), hold(count);
        fill_factors(p, bi, d, t0, t1, z.data(), decay.data(), hold.data());
        for (std::size_t t = t0; t < t1; ++t) {
            const std::size_t xi = (bi * L + t) * D + d;
            const T xv = p.x[xi];
            const T* brow = p.b.data() + (bi * L + t) * N;
            const T* dr = decay.data() + (t - t0) * N;
            const T* hr = hold.data() + (t - t0) * N;
            T* lo = local.data() + (bd * L + t) * N;
            T* pr = prod.data() + (bd * L + t) * N;
            for (std::size_t n = 0; n < N; ++n) {
                const T decay = dr[n];
                const T u = hr[n] * brow[n] * xv;
                if (t == t0) {
                    lo[n] = decay * T(0) + u;
                    pr[n] = decay;
                } else {
                    lo[n] = decay * lo[n - N] + u;
                    pr[n] = decay * pr[n - N];
                }
            }
        }
    }

    // Carry entering each chunk: (b, d, chunk, n).
    std::vector<T> carry(B * D * chunks * N, T(0));
    const long pairs = static_cast<long>(B * D);
#pragma omp parallel for schedule(static)
    for (long bdl = 0; bdl < pairs; ++bdl) {
        const std::size_t bd = static_cast<std::size_t>(bdl);
        std::vector<T> h(N, T(0));
        for (std::size_t ck = 0; ck < chunks; ++ck) {
            std::copy(h.begin(), h.end(), carry.begin() + (bd * chunks + ck) * N);
            const std::size_t last = std::min(L, (ck + 1) * chunk_len) - 1;
            const T* lo = local.data() + (bd * L + last) * N;
            const T* pr = prod.data() + (bd * L + last) * N;
            // (prod, local) composed with the incoming state
            for (std::size_t n = 0; n < N; ++n) h[n] = pr[n] * h[n] + lo[n];
        }
    }

    std::atomic<long> failed{std::numeric_limits<long>::max()};
#pragma omp parallel for schedule(static)
    for (long w = 0; w < work; ++w) {
        const std::size_t bd = static_cast<std::size_t>(w) / chunks;
        const std::size_t ck = static_cast<std::size_t>(w) % chunks;
        const std::size_t bi = bd / D, d = bd % D;
        const std::size_t t0 = ck * chunk_len, t1 = std::min(L, t0 + chunk_len);
        const T* cin = carry.data() + (bd * chunks + ck) * N;
        for (std::size_t t = t0; t < t1; ++t) {
            const std::size_t xi = (bi * L + t) * D + d;
            const T* crow = p.c.data() + (bi * L + t) * N;
            const T* lo = local.data() + (bd * L + t) * N;
            const T* pr = prod.data() + (bd * L + t) * N;
            T acc = 0;
            for (std::size_t n = 0; n < N; ++n) acc += crow[n] * (pr[n] * cin[n] + lo[n]);
            if (!p.skip.empty()) acc += p.skip[d] * p.x[xi];
            y[xi] = acc;
            if (!std::isfinite(acc)) note_failure(failed, static_cast<long>(t));
        }
    }
    raise_if_failed(failed.load());
}

template <class T>
ScanGradients<T> scan_backward(const ScanProblem<T>& p, std::span<const T> dy,
                               const ScanSaved<T>& saved) {
    p.validate();
    const std::size_t B = p.batch, L = p.length, D = p.channels, N = p.state;
    if (!saved.valid() || saved.h.size() != B * D * L * N) {
        throw ContractError("scan_backward called without saved forward activations");
    }
    check_size(dy, B * L * D, "dy");
    ScanGradients<T> g;
    g.x.assign(B * L * D, T(0));
    g.delta.assign(B * L * D, T(0));
    g.a.assign(D * N, T(0));
    g.b.assign(B * L * N, T(0));
    g.c.assign(B * L * N, T(0));
    if (!p.skip.empty()) g.skip.assign(D, T(0));
    // Per-channel contributions to dB and dC, summed over channels afterwards.
    std::vector<T> db_part(B * D * L * N), dc_part(B * D * L * N);

    const long channels = static_cast<long>(D);
#pragma omp parallel for schedule(static)
    for (long dl_ = 0; dl_ < channels; ++dl_) {
        const std::size_t d = static_cast<std::size_t>(dl_);
        const T* arow = p.a.data() + d * N;
        std::vector<T> dh(N);
        for (std::size_t bi = 0; bi < B; ++bi) {
            std::fill(dh.begin(), dh.end(), T(0));
            const T* hs = saved.h.data() + (bi * D + d) * L * N;
            for (std::size_t t = L; t-- > 0;) {
                const std::size_t xi = (bi * L + t) * D + d;
                const T xv = p.x[xi], dl = p.delta[xi], g_y = dy[xi];
                const T* brow = p.b.data() + (bi * L + t) * N;
                const T* crow = p.c.data() + (bi * L + t) * N;
                const T* h_t = hs + t * N;
                const T* h_prev = t > 0 ? hs + (t - 1) * N : nullptr;
                T* dbp = db_part.data() + ((bi * D + d) * L + t) * N;
                T* dcp = dc_part.data() + ((bi * D + d) * L + t) * N;
                T dx = p.skip.empty() ? T(0) : p.skip[d] * g_y;
                if (!p.skip.empty()) g.skip[d] += g_y * xv;
                T ddelta = 0;
                const T* dr = saved.decay.data() + ((bi * D + d) * L + t) * N;
                const T* hr = saved.hold.data() + ((bi * D + d) * L + t) * N;
                for (std::size_t n = 0; n < N; ++n) {
                    const T decay = dr[n], hold = hr[n];
                    dh[n] += crow[n] * g_y;
                    dcp[n] = g_y * h_t[n];
                    const T hp = h_prev ? h_prev[n] : T(0);
                    const T d_decay = dh[n] * hp;
                    const T d_hold = dh[n] * brow[n] * xv;
                    dx += dh[n] * hold * brow[n];
                    dbp[n] = dh[n] * hold * xv;
                    ddelta += d_decay * arow[n] * decay + d_hold * decay;
                    g.a[d * N + n] += d_decay * dl * decay + d_hold * detail::hold_d_a(arow[n], dl, decay, hold);
                    dh[n] *= decay;
                }
                g.x[xi] += dx;
                g.delta[xi] += ddelta;
            }
        }
    }
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < L; ++t)
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t src = ((bi * D + d) * L + t) * N + n;
                    const std::size_t dst = (bi * L + t) * N + n;
                    g.b[dst] += db_part[src];
                    g.c[dst] += dc_part[src];
                }
    return g;
}

template <class T>
SsmParams<T> SsmParams<T>::init(std::size_t channels, std::size_t state_dim, bool use_skip,
                                Rng& rng) {
    if (channels == 0 || state_dim == 0) throw ContractError("SSM sizes must be positive");
    SsmParams<T> p;
    p.channels = channels;
    p.state_dim = state_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    auto uniform = [&](Shape s, double lo, double hi) {
        std::vector<T> v(numel(s));
        for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
        return Tensor<T>(std::move(s), std::move(v), true);
    };
    {
        std::vector<T> v(channels * state_dim);
        for (auto& e : v) e = static_cast<T>(std::log(rng.uniform(1.0, 16.0)));
        p.a_log = Tensor<T>({channels, state_dim}, std::move(v), true);
    }
    p.delta_weight = uniform({channels, channels}, -bound, bound);
    {
        // softplus(bias) log-uniform in [1e-3, 1e-1]
        std::vector<T> v(channels);
        for (auto& e : v) {
            const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
            e = static_cast<T>(dt + std::log(-std::expm1(-dt)));
        }
        p.delta_bias = Tensor<T>({channels}, std::move(v), true);
    }
    p.b_weight = uniform({channels, state_dim}, -bound, bound);
    p.c_weight = uniform({channels, state_dim}, -bound, bound);
    if (use_skip) p.skip_d = Tensor<T>::full({channels}, T(1), true);
    return p;
}

template <class T>
Tensor<T> SsmParams<T>::a() const {
    return neg(exp(a_log));
}

template <class T>
DiscreteParams<T> selective_params(const Tensor<T>& x, const SsmParams<T>& params) {
    if (x.rank() != 3 || x.shape()[2] != params.channels) {
        throw DimensionError("selective_params expects (batch, length, " +
                             std::to_string(params.channels) + "), got " + to_string(x.shape()));
    }
    if (x.shape()[1] == 0) throw ContractError("selective_params needs length >= 1");
    NoGradGuard guard;
    const auto delta = softplus(nn::linear(x, params.delta_weight, params.delta_bias));
    const auto bm = nn::linear(x, params.b_weight, Tensor<T>());
    const auto cm = nn::linear(x, params.c_weight, Tensor<T>());
    DiscreteParams<T> out;
    out.batch = x.shape()[0];
    out.length = x.shape()[1];
    out.channels = params.channels;
    out.state = params.state_dim;
    out.delta.assign(delta.values().begin(), delta.values().end());
    out.c.assign(cm.values().begin(), cm.values().end());
    const auto a_log = params.a_log.values();
    const std::size_t N = out.state, D = out.channels;
    out.a_bar.resize(out.batch * out.length * D * N);
    out.b_bar.resize(out.a_bar.size());
    for (std::size_t bt = 0; bt < out.batch * out.length; ++bt)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t n = 0; n < N; ++n) {
                const T a = -std::exp(a_log[d * N + n]);
                const auto z = discretize_zoh(a, bm.values()[bt * N + n], out.delta[bt * D + d]);
                out.a_bar[(bt * D + d) * N + n] = z.a_bar;
                out.b_bar[(bt * D + d) * N + n] = z.b_bar;
            }
    return out;
}

template <class T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                         const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& skip) {
    if (x.rank() != 3) throw DimensionError("selective_scan expects x of shape (B,L,D)");
    if (a.rank() != 2) throw DimensionError("selective_scan expects A of shape (D,N)");
    ScanProblem<T> p;
    p.batch = x.shape()[0];
    p.length = x.shape()[1];
    p.channels = x.shape()[2];
    p.state = a.shape()[1];
    if (delta.shape() != x.shape() || a.shape()[0] != p.channels ||
        b.shape() != Shape{p.batch, p.length, p.state} || c.shape() != b.shape() ||
        (skip.defined() && skip.numel() != p.channels)) {
        throw DimensionError("selective_scan operand shapes do not conform");
    }
    p.x = x.values();
    p.delta = delta.values();
    p.a = a.values();
    p.b = b.values();
    p.c = c.values();
    if (skip.defined()) p.skip = skip.values();

    std::vector<T> y(x.numel());
    const bool record = grad_enabled();
    auto saved = std::make_shared<ScanSaved<T>>();
    scan_sequential(p, std::span<T>(y), record ? saved.get() : nullptr);

    const bool has_skip = skip.defined();
    std::vector<Tensor<T>> inputs{x, delta, a, b, c};
    if (has_skip) inputs.push_back(skip);
    const ScanProblem<T> dims = p;
    return make_result<T>(x.shape(), std::move(y), inputs, "selective_scan",
                          [dims, saved, has_skip](mxt::detail::Node<T>& self) {
                              ScanProblem<T> q = dims;
                              q.x = self.inputs[0]->data;
                              q.delta = self.inputs[1]->data;
                              q.a = self.inputs[2]->data;
                              q.b = self.inputs[3]->data;
                              q.c = self.inputs[4]->data;
                              if (has_skip) q.skip = self.inputs[5]->data;
                              auto g = scan_backward(q, std::span<const T>(self.grad), *saved);
                              std::vector<T>* parts[] = {&g.x, &g.delta, &g.a, &g.b, &g.c, &g.skip};
                              for (std::size_t i = 0; i < self.inputs.size(); ++i) {
                                  auto& in = *self.inputs[i];
                                  if (!in.requires_grad) continue;
                                  in.ensure_grad();
                                  for (std::size_t j = 0; j < in.grad.size(); ++j)
                                      in.grad[j] += (*parts[i])[j];
                              }
                          });
}

template <class T>
Tensor<T> selective_ssm(const Tensor<T>& x, const SsmParams<T>& params) {
    const auto delta = softplus(nn::linear(x, params.delta_weight, params.delta_bias));
    const auto bm = nn::linear(x, params.b_weight, Tensor<T>());
    const auto cm = nn::linear(x, params.c_weight, Tensor<T>());
    return selective_scan(x, delta, params.a(), bm, cm, params.skip_d);
}

#define MXT_INSTANTIATE_SSM(T)                                                                  \
    template struct ScanProblem<T>;                                                             \
    template struct SsmParams<T>;                                                               \
    template void scan_sequential(const ScanProblem<T>&, std::span<T>, ScanSaved<T>*);          \
    template void scan_chunked(const ScanProblem<T>&, std::size_t, std::span<T>);               \
    template ScanGradients<T> scan_backward(const ScanProblem<T>&, std::span<const T>,          \
                                            const ScanSaved<T>&);                               \
    template DiscreteParams<T> selective_params(const Tensor<T>&, const SsmParams<T>&);         \
    template Tensor<T> selective_scan(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
    template Tensor<T> selective_ssm(const Tensor<T>&, const SsmParams<T>&);

MXT_INSTANTIATE_SSM(float)
MXT_INSTANTIATE_SSM(double)

}  // namespace mxt::ssm
