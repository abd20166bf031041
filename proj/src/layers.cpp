#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "doprec/errors.hpp"
#include "doprec/tensor.hpp"

namespace doprec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r) {
        throw ShapeMismatch(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                            shape_string(t.shape()));
    }
}

}  // namespace

std::size_t conv_output_length(std::size_t L, std::size_t K, const ConvSpec& spec) {
    if (spec.stride == 0) throw ShapeMismatch("conv1d: stride must be positive");
    if (L + 2 * spec.padding < K) return 0;
    return (L + 2 * spec.padding - K) / spec.stride + 1;
}

Var affine(Graph& g, Var x, Var weight, Var bias) {
    const Tensor& X = g.value(x);
    const Tensor& W = g.value(weight);
    const Tensor& b = g.value(bias);
    require_rank(X, 2, "affine");
    require_rank(W, 2, "affine");
    const std::size_t B = X.dim(0), Fin = X.dim(1), Fout = W.dim(0);
    if (W.dim(1) != Fin || b.size() != Fout) {
        throw ShapeMismatch("affine: input " + shape_string(X.shape()) + ", weight " + shape_string(W.shape()) +
                            ", bias " + shape_string(b.shape()));
    }
    Tensor out({B, Fout});
    MapRM Y(out.data(), ix(B), ix(Fout));
    Y.noalias() = CMapRM(X.data(), ix(B), ix(Fin)) * CMapRM(W.data(), ix(Fout), ix(Fin)).transpose();
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), ix(Fout));

    return g.record(std::move(out), {x.id, weight.id, bias.id}, [B, Fin, Fout](Graph& gr, std::size_t self) {
        const std::size_t xi = gr.input(self, 0), wi = gr.input(self, 1), bi = gr.input(self, 2);
        CMapRM dY(gr.grad_ref(self).data(), ix(B), ix(Fout));
        CMapRM Xv(gr.value_of(xi).data(), ix(B), ix(Fin));
        CMapRM Wv(gr.value_of(wi).data(), ix(Fout), ix(Fin));
        MapRM(gr.grad_ref(xi).data(), ix(B), ix(Fin)).noalias() += dY * Wv;
        MapRM(gr.grad_ref(wi).data(), ix(Fout), ix(Fin)).noalias() += dY.transpose() * Xv;
        Eigen::Map<Eigen::RowVectorXd>(gr.grad_ref(bi).data(), ix(Fout)) += dY.colwise().sum();
    });
}

Var conv1d(Graph& g, Var x, Var kernel, std::optional<Var> bias, const ConvSpec& spec) {
    const Tensor& X = g.value(x);
    const Tensor& W = g.value(kernel);
    require_rank(X, 3, "conv1d");
    require_rank(W, 3, "conv1d");
    const std::size_t B = X.dim(0), Cin = X.dim(1), L = X.dim(2);
    const std::size_t Cout = W.dim(0), Cg = W.dim(1), K = W.dim(2), G = spec.groups;
    if (G == 0 || Cin % G != 0 || Cout % G != 0 || Cg != Cin / G) {
        throw ShapeMismatch("conv1d: input " + shape_string(X.shape()) + " incompatible with kernel " +
                            shape_string(W.shape()) + " and groups " + std::to_string(G));
    }
    if (bias && g.value(*bias).size() != Cout) throw ShapeMismatch("conv1d: bias length must equal C_out");
    const std::size_t Lout = conv_output_length(L, K, spec);
    if (Lout < 1) throw ShapeMismatch("conv1d: output length would be zero");
    const std::size_t S = spec.stride, P = spec.padding;
    const std::size_t outPerGroup = Cout / G;

    Tensor out({B, Cout, Lout});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t co = 0; co < Cout; ++co) {
            const std::size_t grp = co / outPerGroup;
            double* y = out.data() + (b * Cout + co) * Lout;
            const double bval = bias ? g.value(*bias)[co] : 0.0;
            for (std::size_t t = 0; t < Lout; ++t) y[t] = bval;
            for (std::size_t c = 0; c < Cg; ++c) {
                const double* xr = X.data() + (b * Cin + grp * Cg + c) * L;
                const double* w = W.data() + (co * Cg + c) * K;
                for (std::size_t t = 0; t < Lout; ++t) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * S + k) - static_cast<std::ptrdiff_t>(P);
                        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) s += w[k] * xr[pos];
                    }
                    y[t] += s;
                }
            }
        }
    }

    std::vector<std::size_t> inputs{x.id, kernel.id};
    if (bias) inputs.push_back(bias->id);
    const bool has_bias = bias.has_value();
    return g.record(std::move(out), inputs,
                    [=](Graph& gr, std::size_t self) {
                        const std::size_t xi = gr.input(self, 0), wi = gr.input(self, 1);
                        const Tensor& dY = gr.grad_ref(self);
                        const Tensor& Xv = gr.value_of(xi);
                        const Tensor& Wv = gr.value_of(wi);
                        Tensor& dX = gr.grad_ref(xi);
                        Tensor& dW = gr.grad_ref(wi);
                        for (std::size_t b = 0; b < B; ++b) {
                            for (std::size_t co = 0; co < Cout; ++co) {
                                const std::size_t grp = co / outPerGroup;
                                const double* dy = dY.data() + (b * Cout + co) * Lout;
                                for (std::size_t c = 0; c < Cg; ++c) {
                                    const std::size_t xoff = (b * Cin + grp * Cg + c) * L;
                                    const std::size_t woff = (co * Cg + c) * K;
                                    for (std::size_t t = 0; t < Lout; ++t) {
                                        for (std::size_t k = 0; k < K; ++k) {
                                            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * S + k) -
                                                                       static_cast<std::ptrdiff_t>(P);
                                            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
                                            dX[xoff + static_cast<std::size_t>(pos)] += Wv[woff + k] * dy[t];
                                            dW[woff + k] += Xv[xoff + static_cast<std::size_t>(pos)] * dy[t];
                                        }
                                    }
                                }
                            }
                        }
                        if (has_bias) {
                            Tensor& db = gr.grad_ref(gr.input(self, 2));
                            for (std::size_t b = 0; b < B; ++b) {
                                for (std::size_t co = 0; co < Cout; ++co) {
                                    const double* dy = dY.data() + (b * Cout + co) * Lout;
                                    for (std::size_t t = 0; t < Lout; ++t) db[co] += dy[t];
                                }
                            }
                        }
                    });
}

Var batchnorm1d(Graph& g, Var x, Var gamma, Var beta, RunningStats& stats, Mode mode, const BatchNormSpec& spec) {
    const Tensor& X = g.value(x);
    if (X.rank() != 2 && X.rank() != 3) throw ShapeMismatch("batchnorm1d: expected (B,C) or (B,C,L) input");
    const std::size_t B = X.dim(0), C = X.dim(1), L = X.rank() == 3 ? X.dim(2) : 1;
    if (g.value(gamma).size() != C || g.value(beta).size() != C || stats.mean.size() != C) {
        throw ShapeMismatch("batchnorm1d: parameter length must equal channel count");
    }
    const std::size_t N = B * L;
    std::vector<double> mean(C), invstd(C);
    if (mode == Mode::Train) {
        if (B < 2) throw DegenerateBatch("batchnorm1d needs at least 2 samples in train mode");
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < L; ++t) s += X[(b * C + c) * L + t];
            }
            const double m = s / static_cast<double>(N);
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t t = 0; t < L; ++t) {
                    const double d = X[(b * C + c) * L + t] - m;
                    v += d * d;
                }
            }
            const double var = v / static_cast<double>(N);
            mean[c] = m;
            invstd[c] = 1.0 / std::sqrt(var + spec.eps);
            stats.mean[c] = (1.0 - spec.momentum) * stats.mean[c] + spec.momentum * m;
            stats.var[c] = (1.0 - spec.momentum) * stats.var[c] +
                           spec.momentum * v / static_cast<double>(N - 1);
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = stats.mean[c];
            invstd[c] = 1.0 / std::sqrt(stats.var[c] + spec.eps);
        }
    }

    const Tensor& ga = g.value(gamma);
    const Tensor& be = g.value(beta);
    Tensor xhat(X.shape()), out(X.shape());
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t t = 0; t < L; ++t) {
                const std::size_t i = (b * C + c) * L + t;
                xhat[i] = (X[i] - mean[c]) * invstd[c];
                out[i] = ga[c] * xhat[i] + be[c];
            }
        }
    }

    const bool train = mode == Mode::Train;
    return g.record(std::move(out), {x.id, gamma.id, beta.id},
                    [=, xhat = std::move(xhat)](Graph& gr, std::size_t self) {
                        const Tensor& dY = gr.grad_ref(self);
                        const Tensor& gav = gr.value_of(gr.input(self, 1));
                        Tensor& dX = gr.grad_ref(gr.input(self, 0));
                        Tensor& dG = gr.grad_ref(gr.input(self, 1));
                        Tensor& dB = gr.grad_ref(gr.input(self, 2));
                        for (std::size_t c = 0; c < C; ++c) {
                            double sdy = 0.0, sdyx = 0.0;
                            for (std::size_t b = 0; b < B; ++b) {
                                for (std::size_t t = 0; t < L; ++t) {
                                    const std::size_t i = (b * C + c) * L + t;
                                    sdy += dY[i];
                                    sdyx += dY[i] * xhat[i];
                                }
                            }
                            dG[c] += sdyx;
                            dB[c] += sdy;
                            const double k = gav[c] * invstd[c];
                            for (std::size_t b = 0; b < B; ++b) {
                                for (std::size_t t = 0; t < L; ++t) {
                                    const std::size_t i = (b * C + c) * L + t;
                                    if (train) {
                                        dX[i] += k * (dY[i] - sdy / static_cast<double>(N) -
                                                      xhat[i] * sdyx / static_cast<double>(N));
                                    } else {
                                        dX[i] += k * dY[i];
                                    }
                                }
                            }
                        }
                    });
}

Var relu(Graph& g, Var x) {
    Tensor out = g.value(x);
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return g.record(std::move(out), {x.id}, [](Graph& gr, std::size_t self) {
        const std::size_t xi = gr.input(self, 0);
        const Tensor& X = gr.value_of(xi);
        const Tensor& dY = gr.grad_ref(self);
        Tensor& dX = gr.grad_ref(xi);
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (X[i] > 0.0) dX[i] += dY[i];
        }
    });
}

std::vector<double> resample_weights(std::size_t L_in, std::size_t L_out) {
    if (L_in < 2 || L_out < 2) throw ShapeMismatch("resample_linear needs at least 2 points on each side");
    std::vector<double> A(L_out * L_in, 0.0);
    for (std::size_t j = 0; j < L_out; ++j) {
        const double s = static_cast<double>(j) * static_cast<double>(L_in - 1) / static_cast<double>(L_out - 1);
        std::size_t i0 = static_cast<std::size_t>(std::floor(s));
        if (i0 >= L_in - 1) i0 = L_in - 2;
        const double w = s - static_cast<double>(i0);
        A[j * L_in + i0] += 1.0 - w;
        A[j * L_in + i0 + 1] += w;
    }
    return A;
}

Var resample_linear(Graph& g, Var x, std::size_t L_out) {
    const Tensor& X = g.value(x);
    if (X.rank() < 2) throw ShapeMismatch("resample_linear: input needs a batch axis");
    const std::size_t L_in = X.shape().back();
    const std::size_t rows = X.size() / L_in;
    auto A = std::make_shared<std::vector<double>>(resample_weights(L_in, L_out));
    std::vector<std::size_t> shape = X.shape();
    shape.back() = L_out;
    Tensor out(shape);
    CMapRM Am(A->data(), ix(L_out), ix(L_in));
    MapRM(out.data(), ix(rows), ix(L_out)).noalias() = CMapRM(X.data(), ix(rows), ix(L_in)) * Am.transpose();
    return g.record(std::move(out), {x.id}, [A, rows, L_in, L_out](Graph& gr, std::size_t self) {
        CMapRM Am(A->data(), ix(L_out), ix(L_in));
        MapRM(gr.grad_ref(gr.input(self, 0)).data(), ix(rows), ix(L_in)).noalias() +=
            CMapRM(gr.grad_ref(self).data(), ix(rows), ix(L_out)) * Am;
    });
}

Var add(Graph& g, Var a, Var b) {
    const Tensor& A = g.value(a);
    const Tensor& Bv = g.value(b);
    if (A.shape() != Bv.shape()) {
        throw ShapeMismatch("add: shapes " + shape_string(A.shape()) + " and " + shape_string(Bv.shape()));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += Bv[i];
    return g.record(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
        const Tensor& dY = gr.grad_ref(self);
        for (std::size_t k = 0; k < 2; ++k) {
            Tensor& d = gr.grad_ref(gr.input(self, k));
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += dY[i];
        }
    });
}

Var reshape(Graph& g, Var x, std::vector<std::size_t> shape) {
    Tensor out = g.value(x).reshaped(std::move(shape));
    return g.record(std::move(out), {x.id}, [](Graph& gr, std::size_t self) {
        const Tensor& dY = gr.grad_ref(self);
        Tensor& dX = gr.grad_ref(gr.input(self, 0));
        for (std::size_t i = 0; i < dX.size(); ++i) dX[i] += dY[i];
    });
}

Var mse_loss(Graph& g, Var x, const Tensor& target) {
    const Tensor& X = g.value(x);
    if (X.shape() != target.shape()) {
        throw ShapeMismatch("mse_loss: prediction " + shape_string(X.shape()) + " vs target " +
                            shape_string(target.shape()));
    }
    const double B = static_cast<double>(X.dim(0));
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double d = X[i] - target[i];
        s += d * d;
    }
    Tensor out({1}, s / B);
    return g.record(std::move(out), {x.id}, [target, B](Graph& gr, std::size_t self) {
        const double dy = gr.grad_ref(self)[0];
        const std::size_t xi = gr.input(self, 0);
        const Tensor& X = gr.value_of(xi);
        Tensor& dX = gr.grad_ref(xi);
        for (std::size_t i = 0; i < X.size(); ++i) dX[i] += dy * 2.0 * (X[i] - target[i]) / B;
    });
}

}  // namespace doprec
