#include "dpt/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dpt {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("tape: " + msg);
}

} // namespace

Var Tape::push(Node node) {
    if (!node.value.all_finite()) {
        throw std::runtime_error(std::string("tape: non-finite values produced by op '") +
                                 node.op + "' at node " + std::to_string(nodes_.size()));
    }
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    Tensor& dst = grad(id);
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
}

Var Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.needs_grad = !p.frozen;
    n.op = "leaf";
    n.param = &p;
    return push(std::move(n));
}

Var Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = false;
    n.op = "constant";
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Node n;
    n.value = av;
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bv.data[i];
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.op = "add";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, b, out](Tape& t) {
        t.accumulate(a.id, t.grad(out));
        t.accumulate(b.id, t.grad(out));
    };
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.same_shape(bv), "sub: shape mismatch");
    Node n;
    n.value = av;
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= bv.data[i];
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.op = "sub";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        t.accumulate(a.id, g);
        if (t.nodes_[b.id].needs_grad) {
            Tensor& db = t.grad(b.id);
            for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] -= g.data[i];
        }
    };
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.same_shape(bv), "mul: shape mismatch");
    Node n;
    n.value = av;
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bv.data[i];
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.op = "mul";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        if (t.nodes_[a.id].needs_grad) {
            Tensor& da = t.grad(a.id);
            for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * bv2.data[i];
        }
        if (t.nodes_[b.id].needs_grad) {
            Tensor& db = t.grad(b.id);
            for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] += g.data[i] * av2.data[i];
        }
    };
    return push(std::move(n));
}

Var Tape::affine(Var a, double mul, double add) {
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = v * mul + add;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "affine";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, mul, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * mul;
    };
    return push(std::move(n));
}

Var Tape::scale_by(Var a, Var s) {
    const Tensor& sv = value(s);
    require(sv.size() == 1, "scale_by: scalar operand must be 1x1");
    const double k = sv.data[0];
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v *= k;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[s.id].needs_grad;
    n.op = "scale_by";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, s, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const double k2 = t.value(s).data[0];
        if (t.nodes_[a.id].needs_grad) {
            Tensor& da = t.grad(a.id);
            for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * k2;
        }
        if (t.nodes_[s.id].needs_grad) {
            const Tensor& av = t.value(a);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * av.data[i];
            t.grad(s.id).data[0] += acc;
        }
    };
    return push(std::move(n));
}

Var Tape::add_scalar(Var a, Var s) {
    const Tensor& sv = value(s);
    require(sv.size() == 1, "add_scalar: scalar operand must be 1x1");
    const double k = sv.data[0];
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v += k;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[s.id].needs_grad;
    n.op = "add_scalar";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, s, out](Tape& t) {
        const Tensor& g = t.grad(out);
        t.accumulate(a.id, g);
        if (t.nodes_[s.id].needs_grad) {
            double acc = 0.0;
            for (double v : g.data) acc += v;
            t.grad(s.id).data[0] += acc;
        }
    };
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.value = dpt::matmul(value(a), value(b));
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.op = "matmul";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        if (t.nodes_[a.id].needs_grad) t.accumulate(a.id, matmul_nt(g, t.value(b)));
        if (t.nodes_[b.id].needs_grad) t.accumulate(b.id, matmul_tn(t.value(a), g));
    };
    return push(std::move(n));
}

Var Tape::spmm(SpMatPtr fwd, SpMatPtr fwd_t, Var x) {
    require(fwd && fwd_t, "spmm: null matrix");
    require(fwd->rows == fwd_t->cols && fwd->cols == fwd_t->rows,
            "spmm: transpose shape mismatch");
    Node n;
    n.value = dpt::spmm(*fwd, value(x));
    n.needs_grad = nodes_[x.id].needs_grad;
    n.op = "spmm";
    const int out = static_cast<int>(nodes_.size());
    n.back = [fwd_t, x, out](Tape& t) {
        if (!t.nodes_[x.id].needs_grad) return;
        t.accumulate(x.id, dpt::spmm(*fwd_t, t.grad(out)));
    };
    return push(std::move(n));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    bool needs = false;
    for (Var p : parts) {
        require(value(p).rows == rows, "concat_cols: row mismatch");
        cols += value(p).cols;
        needs = needs || nodes_[p.id].needs_grad;
    }
    Node n;
    n.value = Tensor(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < pv.cols; ++c) n.value.at(r, off + c) = pv.at(r, c);
        }
        off += pv.cols;
    }
    n.needs_grad = needs;
    n.op = "concat_cols";
    const int out = static_cast<int>(nodes_.size());
    std::vector<Var> held = parts;
    n.back = [held, out](Tape& t) {
        const Tensor& g = t.grad(out);
        std::size_t off2 = 0;
        for (Var p : held) {
            const Tensor& pv = t.value(p);
            if (t.nodes_[p.id].needs_grad) {
                Tensor& dp = t.grad(p.id);
                for (std::size_t r = 0; r < pv.rows; ++r) {
                    for (std::size_t c = 0; c < pv.cols; ++c) {
                        dp.at(r, c) += g.at(r, off2 + c);
                    }
                }
            }
            off2 += pv.cols;
        }
    };
    return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> ids) {
    const Tensor& av = value(a);
    for (int id : ids) {
        require(id >= 0 && static_cast<std::size_t>(id) < av.rows,
                "gather_rows: row index " + std::to_string(id) + " out of range for " +
                    av.shape_str());
    }
    Node n;
    n.value = Tensor(ids.size(), av.cols);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t c = 0; c < av.cols; ++c) {
            n.value.at(r, c) = av.at(static_cast<std::size_t>(ids[r]), c);
        }
    }
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "gather_rows";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, ids = std::move(ids), out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        Tensor& da = t.grad(a.id);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) {
                da.at(static_cast<std::size_t>(ids[r]), c) += g.at(r, c);
            }
        }
    };
    return push(std::move(n));
}

Var Tape::rows_dot(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.same_shape(bv), "rows_dot: shape mismatch");
    Node n;
    n.value = Tensor(av.rows, 1);
    for (std::size_t r = 0; r < av.rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < av.cols; ++c) acc += av.at(r, c) * bv.at(r, c);
        n.value.at(r, 0) = acc;
    }
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.op = "rows_dot";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, b, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        if (t.nodes_[a.id].needs_grad) {
            Tensor& da = t.grad(a.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                for (std::size_t c = 0; c < av2.cols; ++c) {
                    da.at(r, c) += g.at(r, 0) * bv2.at(r, c);
                }
            }
        }
        if (t.nodes_[b.id].needs_grad) {
            Tensor& db = t.grad(b.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                for (std::size_t c = 0; c < av2.cols; ++c) {
                    db.at(r, c) += g.at(r, 0) * av2.at(r, c);
                }
            }
        }
    };
    return push(std::move(n));
}

Var Tape::scale_rows(Var a, Var s) {
    const Tensor& av = value(a);
    const Tensor& sv = value(s);
    require(sv.rows == av.rows && sv.cols == 1, "scale_rows: scale must be n x 1");
    Node n;
    n.value = av;
    for (std::size_t r = 0; r < av.rows; ++r) {
        const double k = sv.at(r, 0);
        for (std::size_t c = 0; c < av.cols; ++c) n.value.at(r, c) *= k;
    }
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[s.id].needs_grad;
    n.op = "scale_rows";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, s, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av2 = t.value(a);
        const Tensor& sv2 = t.value(s);
        if (t.nodes_[a.id].needs_grad) {
            Tensor& da = t.grad(a.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                const double k = sv2.at(r, 0);
                for (std::size_t c = 0; c < av2.cols; ++c) da.at(r, c) += g.at(r, c) * k;
            }
        }
        if (t.nodes_[s.id].needs_grad) {
            Tensor& ds = t.grad(s.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < av2.cols; ++c) acc += g.at(r, c) * av2.at(r, c);
                ds.at(r, 0) += acc;
            }
        }
    };
    return push(std::move(n));
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    require(vv.rows == 1 && vv.cols == av.cols, "add_rowvec: vector must be 1 x cols");
    Node n;
    n.value = av;
    for (std::size_t r = 0; r < av.rows; ++r) {
        for (std::size_t c = 0; c < av.cols; ++c) n.value.at(r, c) += vv.at(0, c);
    }
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[v.id].needs_grad;
    n.op = "add_rowvec";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, v, out](Tape& t) {
        const Tensor& g = t.grad(out);
        t.accumulate(a.id, g);
        if (t.nodes_[v.id].needs_grad) {
            Tensor& dv = t.grad(v.id);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) dv.at(0, c) += g.at(r, c);
            }
        }
    };
    return push(std::move(n));
}

Var Tape::mul_rowvec(Var a, Var v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    require(vv.rows == 1 && vv.cols == av.cols, "mul_rowvec: vector must be 1 x cols");
    Node n;
    n.value = av;
    for (std::size_t r = 0; r < av.rows; ++r) {
        for (std::size_t c = 0; c < av.cols; ++c) n.value.at(r, c) *= vv.at(0, c);
    }
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[v.id].needs_grad;
    n.op = "mul_rowvec";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, v, out](Tape& t) {
        const Tensor& g = t.grad(out);
        const Tensor& av2 = t.value(a);
        const Tensor& vv2 = t.value(v);
        if (t.nodes_[a.id].needs_grad) {
            Tensor& da = t.grad(a.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                for (std::size_t c = 0; c < av2.cols; ++c) {
                    da.at(r, c) += g.at(r, c) * vv2.at(0, c);
                }
            }
        }
        if (t.nodes_[v.id].needs_grad) {
            Tensor& dv = t.grad(v.id);
            for (std::size_t r = 0; r < av2.rows; ++r) {
                for (std::size_t c = 0; c < av2.cols; ++c) {
                    dv.at(0, c) += g.at(r, c) * av2.at(r, c);
                }
            }
        }
    };
    return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = 1.0 / (1.0 + std::exp(-v));
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "sigmoid";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        const Tensor& y = t.nodes_[out].value;
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
    };
    return push(std::move(n));
}

Var Tape::relu(Var a) {
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "relu";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        const Tensor& x = t.value(a);
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            if (x.data[i] > 0.0) da.data[i] += g.data[i];
        }
    };
    return push(std::move(n));
}

Var Tape::log(Var a) {
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = std::log(v);
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "log";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        const Tensor& x = t.value(a);
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] / x.data[i];
    };
    return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
    require(lo < hi, "clamp: lo must be below hi");
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = v < lo ? lo : (v > hi ? hi : v);
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "clamp";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, lo, hi, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        const Tensor& x = t.value(a);
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            if (x.data[i] > lo && x.data[i] < hi) da.data[i] += g.data[i];
        }
    };
    return push(std::move(n));
}

Var Tape::reciprocal(Var a) {
    Node n;
    n.value = value(a);
    for (double& v : n.value.data) v = 1.0 / v;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "reciprocal";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        const Tensor& y = t.nodes_[out].value;
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            da.data[i] -= g.data[i] * y.data[i] * y.data[i];
        }
    };
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    Node n;
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    n.value = Tensor::scalar(acc);
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "sum";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const double g = t.grad(out).data[0];
        Tensor& da = t.grad(a.id);
        for (double& v : da.data) v += g;
    };
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    const std::size_t count = value(a).size();
    require(count > 0, "mean: empty tensor");
    Node n;
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    n.value = Tensor::scalar(acc / static_cast<double>(count));
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "mean";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, count, out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const double g = t.grad(out).data[0] / static_cast<double>(count);
        Tensor& da = t.grad(a.id);
        for (double& v : da.data) v += g;
    };
    return push(std::move(n));
}

Var Tape::dropout(Var a, double keep_prob, bool training, Rng& rng) {
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw std::invalid_argument("tape: dropout keep_prob must be in (0, 1]");
    }
    if (!training || keep_prob == 1.0) return a;
    const Tensor& av = value(a);
    std::vector<double> mult(av.size());
    const double scale = 1.0 / keep_prob;
    for (double& m : mult) m = rng.bernoulli(keep_prob) ? scale : 0.0;
    Node n;
    n.value = av;
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= mult[i];
    n.needs_grad = nodes_[a.id].needs_grad;
    n.op = "dropout";
    const int out = static_cast<int>(nodes_.size());
    n.back = [a, mult = std::move(mult), out](Tape& t) {
        if (!t.nodes_[a.id].needs_grad) return;
        const Tensor& g = t.grad(out);
        Tensor& da = t.grad(a.id);
        for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * mult[i];
    };
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw std::out_of_range("tape: invalid var");
    }
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

double Tape::scalar_value(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw std::invalid_argument("tape: scalar_value on non-scalar");
    return t.data[0];
}

void Tape::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (lv.size() != 1) throw std::invalid_argument("tape: backward target must be 1x1");
    if (!nodes_[loss.id].needs_grad) return; // everything frozen
    grad(loss.id).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.back) n.back(*this);
        if (n.param && !n.param->frozen) {
            for (std::size_t k = 0; k < n.grad.data.size(); ++k) {
                n.param->grad.data[k] += n.grad.data[k];
            }
        }
    }
}

} // namespace dpt
