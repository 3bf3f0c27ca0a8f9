#include "vpoc/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vpoc/rng.hpp"

namespace vpoc::nets {

namespace {

int conv_out_extent(int in) { return (in + 1) / 2; }

// Zero padding before the first input element, SAME-style for stride 2.
int conv_pad_begin(int in) {
  const int out = conv_out_extent(in);
  const int total = std::max(0, (out - 1) * 2 + 3 - in);
  return total / 2;
}

}  // namespace

std::string NetSpec::signature() const {
  std::ostringstream os;
  os << "aux:" << aux_dim;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Conv) {
      os << ";conv " << l.in_c << "x" << l.in_h << "x" << l.in_w << "->"
         << l.out_c << "x" << l.out_h << "x" << l.out_w;
    } else {
      os << ";dense " << l.in_dim << "->" << l.out_dim;
      if (l.concat_aux) os << " cat";
    }
    os << (l.act == Activation::Tanh ? " tanh" : " linear");
    if (l.out_scale != 1.0) os << " scale=" << l.out_scale;
  }
  return os.str();
}

NetSpec make_net_spec(const TrunkSpec& trunk, const std::vector<int>& hidden,
                      int aux_dim, int out_dim, Activation out_act,
                      double out_scale) {
  if (aux_dim < 0) throw ShapeError("aux_dim must be >= 0");
  if (out_dim < 1) throw ShapeError("out_dim must be >= 1");
  NetSpec spec;
  spec.aux_dim = aux_dim;
  int flat = 0;
  if (trunk.conv) {
    if (trunk.in_c < 1 || trunk.in_h < 1 || trunk.in_w < 1 ||
        trunk.conv_channels < 1 || trunk.conv_layers < 1)
      throw ShapeError("invalid conv trunk");
    int c = trunk.in_c, h = trunk.in_h, w = trunk.in_w;
    for (int i = 0; i < trunk.conv_layers; ++i) {
      LayerSpec l;
      l.kind = LayerKind::Conv;
      l.act = Activation::Tanh;
      l.in_c = c;
      l.in_h = h;
      l.in_w = w;
      l.out_c = trunk.conv_channels;
      l.out_h = conv_out_extent(h);
      l.out_w = conv_out_extent(w);
      spec.layers.push_back(l);
      c = l.out_c;
      h = l.out_h;
      w = l.out_w;
    }
    flat = c * h * w;
  } else {
    if (trunk.feat_dim < 1) throw ShapeError("flat trunk needs feat_dim >= 1");
    flat = trunk.feat_dim;
  }
  bool first_dense = true;
  int prev = flat;
  for (int width : hidden) {
    if (width < 1) throw ShapeError("hidden width must be >= 1");
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.act = Activation::Tanh;
    l.concat_aux = first_dense && aux_dim > 0;
    l.in_dim = prev + (l.concat_aux ? aux_dim : 0);
    l.out_dim = width;
    spec.layers.push_back(l);
    prev = width;
    first_dense = false;
  }
  LayerSpec out;
  out.kind = LayerKind::Dense;
  out.act = out_act;
  out.concat_aux = first_dense && aux_dim > 0;  // nets with no hidden stack
  out.in_dim = prev + (out.concat_aux ? aux_dim : 0);
  out.out_dim = out_dim;
  out.out_scale = out_scale;
  out.final_init = true;
  spec.layers.push_back(out);
  return spec;
}

template <class T>
Network<T> build_network(const NetSpec& spec, rng::Stream& rs) {
  Network<T> net;
  net.spec = spec;
  for (const auto& l : spec.layers) {
    Tensor<T> w, b;
    double fan_in = 0.0;
    if (l.kind == LayerKind::Conv) {
      w = Tensor<T>({l.out_c, l.in_c, 3, 3});
      b = Tensor<T>({l.out_c});
      fan_in = static_cast<double>(l.in_c) * 9.0;
    } else {
      w = Tensor<T>({l.out_dim, l.in_dim});
      b = Tensor<T>({l.out_dim});
      fan_in = static_cast<double>(l.in_dim);
    }
    const double bound =
        l.final_init ? 3e-3 : 1.0 / std::sqrt(fan_in);
    for (auto& x : w.data) x = static_cast<T>(rs.uniform(-bound, bound));
    for (auto& x : b.data) x = static_cast<T>(rs.uniform(-bound, bound));
    net.params.push_back(std::move(w));
    net.params.push_back(std::move(b));
  }
  return net;
}

namespace {

template <class T>
void conv_forward(const LayerSpec& l, const Tensor<T>& w, const Tensor<T>& b,
                  const Tensor<T>& in, Tensor<T>& out) {
  const int ph = conv_pad_begin(l.in_h);
  const int pw = conv_pad_begin(l.in_w);
  for (int oc = 0; oc < l.out_c; ++oc) {
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        T acc = b.data[static_cast<std::size_t>(oc)];
        for (int ic = 0; ic < l.in_c; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - ph + ky;
            if (iy < 0 || iy >= l.in_h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - pw + kx;
              if (ix < 0 || ix >= l.in_w) continue;
              acc += w.data[((static_cast<std::size_t>(oc) * l.in_c + ic) * 3 +
                             ky) *
                                3 +
                            kx] *
                     in.data[(static_cast<std::size_t>(ic) * l.in_h + iy) *
                                 l.in_w +
                             ix];
            }
          }
        }
        out.data[(static_cast<std::size_t>(oc) * l.out_h + oy) * l.out_w +
                 ox] = acc;
      }
    }
  }
}

template <class T>
void conv_backward(const LayerSpec& l, const Tensor<T>& w, const Tensor<T>& in,
                   const Tensor<T>& dz, Tensor<T>& dw, Tensor<T>& db,
                   Tensor<T>& din) {
  const int ph = conv_pad_begin(l.in_h);
  const int pw = conv_pad_begin(l.in_w);
  for (int oc = 0; oc < l.out_c; ++oc) {
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        const T g = dz.data[(static_cast<std::size_t>(oc) * l.out_h + oy) *
                                l.out_w +
                            ox];
        db.data[static_cast<std::size_t>(oc)] += g;
        for (int ic = 0; ic < l.in_c; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - ph + ky;
            if (iy < 0 || iy >= l.in_h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - pw + kx;
              if (ix < 0 || ix >= l.in_w) continue;
              const std::size_t wi =
                  ((static_cast<std::size_t>(oc) * l.in_c + ic) * 3 + ky) * 3 +
                  kx;
              const std::size_t ii =
                  (static_cast<std::size_t>(ic) * l.in_h + iy) * l.in_w + ix;
              dw.data[wi] += g * in.data[ii];
              din.data[ii] += g * w.data[wi];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& trunk_in,
                  const Tensor<T>& aux_in, ForwardCache<T>* cache) {
  const auto& spec = net.spec;
  if (static_cast<int>(aux_in.size()) != spec.aux_dim)
    throw ShapeError("aux input size mismatch");
  if (cache) {
    cache->trunk_in = trunk_in;
    cache->aux_in = aux_in;
    cache->inputs.clear();
    cache->act.clear();
  }
  Tensor<T> cur = trunk_in;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& l = spec.layers[li];
    const auto& w = net.params[2 * li];
    const auto& b = net.params[2 * li + 1];
    Tensor<T> z;
    if (l.kind == LayerKind::Conv) {
      if (static_cast<int>(cur.size()) != l.in_c * l.in_h * l.in_w)
        throw ShapeError("conv input size mismatch");
      if (cache) cache->inputs.push_back(cur);
      z = Tensor<T>({l.out_c, l.out_h, l.out_w});
      conv_forward(l, w, b, cur, z);
    } else {
      Tensor<T> x;
      if (l.concat_aux) {
        x = Tensor<T>({l.in_dim});
        const std::size_t prev = cur.size();
        if (static_cast<int>(prev) + spec.aux_dim != l.in_dim)
          throw ShapeError("dense input size mismatch");
        std::copy(cur.data.begin(), cur.data.end(), x.data.begin());
        std::copy(aux_in.data.begin(), aux_in.data.end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(prev));
      } else {
        if (static_cast<int>(cur.size()) != l.in_dim)
          throw ShapeError("dense input size mismatch");
        x = cur;
      }
      if (cache) cache->inputs.push_back(x);
      z = Tensor<T>({l.out_dim});
      for (int o = 0; o < l.out_dim; ++o) {
        const T* row = w.data.data() + static_cast<std::size_t>(o) * l.in_dim;
        T acc = b.data[static_cast<std::size_t>(o)];
        for (int i = 0; i < l.in_dim; ++i) acc += row[i] * x.data[i];
        z.data[static_cast<std::size_t>(o)] = acc;
      }
    }
    const T s = static_cast<T>(l.out_scale);
    if (l.act == Activation::Tanh) {
      for (auto& v : z.data) v = s * std::tanh(v);
    } else if (l.out_scale != 1.0) {
      for (auto& v : z.data) v = s * v;
    }
    if (cache) cache->act.push_back(z);
    cur = std::move(z);
  }
  return cur;
}

template <class T>
Gradients<T> Gradients<T>::zeros_like(const Network<T>& net) {
  Gradients<T> g;
  for (const auto& p : net.params) g.params.push_back(Tensor<T>(p.shape));
  const auto& first = net.spec.layers.front();
  if (first.kind == LayerKind::Conv) {
    g.trunk_in = Tensor<T>({first.in_c, first.in_h, first.in_w});
  } else {
    g.trunk_in = Tensor<T>(
        {first.concat_aux ? first.in_dim - net.spec.aux_dim : first.in_dim});
  }
  if (net.spec.aux_dim > 0) g.aux_in = Tensor<T>({net.spec.aux_dim});
  return g;
}

template <class T>
void Gradients<T>::scale(T s) {
  for (auto& t : params)
    for (auto& v : t.data) v *= s;
  for (auto& v : trunk_in.data) v *= s;
  for (auto& v : aux_in.data) v *= s;
}

template <class T>
void backward(const Network<T>& net, const ForwardCache<T>& cache,
              const Tensor<T>& d_out, Gradients<T>& into) {
  const auto& spec = net.spec;
  if (cache.act.size() != spec.layers.size())
    throw ShapeError("cache does not match network");
  Tensor<T> d = d_out;
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const auto& l = spec.layers[li];
    const auto& w = net.params[2 * li];
    const auto& x = cache.inputs[li];
    const auto& y = cache.act[li];
    if (d.size() != y.size()) throw ShapeError("output gradient size mismatch");
    // Through the activation: y = s * tanh(z) gives dy/dz = s - y^2 / s;
    // y = s * z gives dy/dz = s.
    Tensor<T> dz = d;
    const T s = static_cast<T>(l.out_scale);
    if (l.act == Activation::Tanh) {
      for (std::size_t i = 0; i < dz.size(); ++i)
        dz.data[i] *= s - y.data[i] * y.data[i] / s;
    } else if (l.out_scale != 1.0) {
      for (auto& v : dz.data) v *= s;
    }
    auto& dw = into.params[2 * li];
    auto& db = into.params[2 * li + 1];
    if (l.kind == LayerKind::Conv) {
      Tensor<T> din({l.in_c, l.in_h, l.in_w});
      conv_backward(l, w, x, dz, dw, db, din);
      d = std::move(din);
    } else {
      Tensor<T> dx({l.in_dim});
      for (int o = 0; o < l.out_dim; ++o) {
        const T g = dz.data[static_cast<std::size_t>(o)];
        db.data[static_cast<std::size_t>(o)] += g;
        const T* row = w.data.data() + static_cast<std::size_t>(o) * l.in_dim;
        T* dwrow = dw.data.data() + static_cast<std::size_t>(o) * l.in_dim;
        for (int i = 0; i < l.in_dim; ++i) {
          dwrow[i] += g * x.data[i];
          dx.data[i] += g * row[i];
        }
      }
      if (l.concat_aux) {
        const int prev = l.in_dim - spec.aux_dim;
        for (int i = 0; i < spec.aux_dim; ++i)
          into.aux_in.data[static_cast<std::size_t>(i)] +=
              dx.data[static_cast<std::size_t>(prev + i)];
        Tensor<T> dprev({prev});
        std::copy(dx.data.begin(), dx.data.begin() + prev, dprev.data.begin());
        d = std::move(dprev);
      } else {
        d = std::move(dx);
      }
    }
  }
  for (std::size_t i = 0; i < d.size(); ++i) into.trunk_in.data[i] += d.data[i];
}

template <class T>
void add_weight_decay(Gradients<T>& grads, const Network<T>& net,
                      double lambda) {
  for (std::size_t li = 0; li < net.spec.layers.size(); ++li) {
    const auto& w = net.params[2 * li];
    auto& dw = grads.params[2 * li];
    const T lam = static_cast<T>(lambda);
    for (std::size_t i = 0; i < w.size(); ++i) dw.data[i] += lam * w.data[i];
  }
}

template <class T>
AdamState<T> AdamState<T>::init_like(const Network<T>& net, double lr_in) {
  AdamState<T> st;
  st.lr = lr_in;
  for (const auto& p : net.params) {
    st.m.push_back(Tensor<T>(p.shape));
    st.v.push_back(Tensor<T>(p.shape));
  }
  return st;
}

template <class T>
void adam_step(AdamState<T>& st, std::vector<Tensor<T>>& params,
               const std::vector<Tensor<T>>& grads) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw ShapeError("adam: parameter/gradient count mismatch");
  for (std::size_t t = 0; t < grads.size(); ++t) {
    if (grads[t].size() != params[t].size())
      throw ShapeError("adam: gradient shape mismatch");
    for (const T g : grads[t].data)
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericsError("adam: non-finite gradient, update rejected");
  }
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  for (std::size_t t = 0; t < params.size(); ++t) {
    T* p = params[t].data.data();
    T* m = st.m[t].data.data();
    T* v = st.v[t].data.data();
    const T* g = grads[t].data.data();
    const std::size_t n = params[t].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      p[i] -= static_cast<T>(st.lr * m_hat / (std::sqrt(v_hat) + st.eps));
    }
  }
}

template <class T>
void polyak_update(Network<T>& target, const Network<T>& source, double tau) {
  if (target.params.size() != source.params.size())
    throw ShapeError("polyak: parameter count mismatch");
  const T t1 = static_cast<T>(1.0 - tau);
  const T t2 = static_cast<T>(tau);
  for (std::size_t t = 0; t < target.params.size(); ++t) {
    if (target.params[t].size() != source.params[t].size())
      throw ShapeError("polyak: parameter shape mismatch");
    T* dst = target.params[t].data.data();
    const T* src = source.params[t].data.data();
    const std::size_t n = target.params[t].size();
    for (std::size_t i = 0; i < n; ++i) dst[i] = t1 * dst[i] + t2 * src[i];
  }
}

template struct Tensor<float>;
template struct Tensor<double>;
template Network<float> build_network<float>(const NetSpec&, rng::Stream&);
template Network<double> build_network<double>(const NetSpec&, rng::Stream&);
template Tensor<float> forward<float>(const Network<float>&,
                                      const Tensor<float>&,
                                      const Tensor<float>&,
                                      ForwardCache<float>*);
template Tensor<double> forward<double>(const Network<double>&,
                                        const Tensor<double>&,
                                        const Tensor<double>&,
                                        ForwardCache<double>*);
template struct Gradients<float>;
template struct Gradients<double>;
template void backward<float>(const Network<float>&,
                              const ForwardCache<float>&, const Tensor<float>&,
                              Gradients<float>&);
template void backward<double>(const Network<double>&,
                               const ForwardCache<double>&,
                               const Tensor<double>&, Gradients<double>&);
template void add_weight_decay<float>(Gradients<float>&, const Network<float>&,
                                      double);
template void add_weight_decay<double>(Gradients<double>&,
                                       const Network<double>&, double);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, std::vector<Tensor<float>>&,
                               const std::vector<Tensor<float>>&);
template void adam_step<double>(AdamState<double>&,
                                std::vector<Tensor<double>>&,
                                const std::vector<Tensor<double>>&);
template void polyak_update<float>(Network<float>&, const Network<float>&,
                                   double);
template void polyak_update<double>(Network<double>&, const Network<double>&,
                                    double);

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size())
      throw FormatError(std::string("checkpoint truncated reading ") + what,
                        pos);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::string out;
  out += "VPOC";
  put_u16(out, kCheckpointVersion);
  if (ck.metadata.size() > 0xffffffffULL)
    throw FormatError("checkpoint metadata too large");
  put_u32(out, static_cast<std::uint32_t>(ck.metadata.size()));
  out += ck.metadata;
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.shape.size() > 255) throw FormatError("tensor rank too large");
    out.push_back(static_cast<char>(t.shape.size()));
    for (int e : t.shape) put_u32(out, static_cast<std::uint32_t>(e));
    const std::size_t bytes = t.size() * sizeof(float);
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, t.data.data(), bytes);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw StorageError("short write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  Reader r{buf};
  r.need(4, "magic");
  if (buf.compare(0, 4, "VPOC") != 0)
    throw FormatError("bad checkpoint magic", 0);
  r.pos = 4;
  const auto version = r.u16("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                          std::to_string(version),
                      4);
  Checkpoint ck;
  const auto meta_len = r.u32("metadata length");
  r.need(meta_len, "metadata");
  ck.metadata = buf.substr(r.pos, meta_len);
  r.pos += meta_len;
  const auto count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    r.need(1, "tensor rank");
    const auto rank = static_cast<unsigned char>(buf[r.pos]);
    r.pos += 1;
    std::vector<int> shape;
    std::size_t n = 1;
    for (unsigned k = 0; k < rank; ++k) {
      const auto e = r.u32("tensor extent");
      if (e == 0 || e > (1u << 28))
        throw FormatError("bad tensor extent", r.pos - 4);
      shape.push_back(static_cast<int>(e));
      n *= e;
    }
    Tensor<float> t;
    t.shape = shape;
    t.data.resize(n);
    const std::size_t bytes = n * sizeof(float);
    r.need(bytes, "tensor payload");
    std::memcpy(t.data.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
    ck.tensors.push_back(std::move(t));
  }
  if (r.pos != buf.size())
    throw FormatError("trailing bytes after last tensor", r.pos);
  return ck;
}

}  // namespace vpoc::nets
