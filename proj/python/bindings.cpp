// Python bindings for the cross-modality bridge library. The module mirrors
// the C++ surface: tensors, the synthetic paired-signal generator, frozen
// encoder stacks, position selection, the low-rank bridge and its baselines,
// metrics, and the experiment driver with its deterministic reports.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biox/bridge.hpp"
#include "biox/checkpoint.hpp"
#include "biox/cka.hpp"
#include "biox/data.hpp"
#include "biox/experiment.hpp"
#include "biox/metrics.hpp"
#include "biox/model.hpp"
#include "biox/tensor.hpp"
#include "biox/transfer.hpp"

namespace py = pybind11;
using namespace biox;

namespace {

// ------------------------------------------------------------- conversions

void infer_extents(const py::sequence& seq, size_t depth, Shape& shape) {
    auto n = static_cast<int64_t>(seq.size());
    if (depth == shape.size()) {
        shape.push_back(n);
    } else if (shape[depth] != n) {
        throw py::value_error("ragged nested sequence cannot become a tensor");
    }
}

void fill_from_sequence(const py::sequence& seq, size_t depth, Shape& shape,
                        std::vector<double>& out) {
    infer_extents(seq, depth, shape);
    for (py::handle item : seq) {
        if (py::isinstance<py::sequence>(item) && !py::isinstance<py::str>(item)) {
            fill_from_sequence(py::reinterpret_borrow<py::sequence>(item), depth + 1, shape, out);
        } else {
            if (depth + 1 != shape.size()) {
                throw py::value_error("ragged nested sequence cannot become a tensor");
            }
            out.push_back(item.cast<double>());
        }
    }
}

Tensor tensor_from_object(const py::object& obj) {
    if (py::isinstance<Tensor>(obj)) return obj.cast<Tensor>();
    if (py::isinstance<py::buffer>(obj)) {
        py::buffer_info info = py::reinterpret_borrow<py::buffer>(obj).request();
        if (info.format != py::format_descriptor<double>::format()) {
            throw py::value_error("buffer must hold float64 values");
        }
        Shape shape(info.shape.begin(), info.shape.end());
        Tensor t(shape);
        // Copy respecting strides so non-contiguous views work too.
        std::vector<py::ssize_t> idx(static_cast<size_t>(info.ndim), 0);
        for (int64_t flat = 0; flat < t.numel(); ++flat) {
            const char* src = static_cast<const char*>(info.ptr);
            for (py::ssize_t d = 0; d < info.ndim; ++d) {
                src += idx[static_cast<size_t>(d)] * info.strides[static_cast<size_t>(d)];
            }
            std::memcpy(t.data() + flat, src, sizeof(double));
            for (py::ssize_t d = info.ndim - 1; d >= 0; --d) {
                if (++idx[static_cast<size_t>(d)] < info.shape[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
        return t;
    }
    if (py::isinstance<py::sequence>(obj) && !py::isinstance<py::str>(obj)) {
        Shape shape;
        std::vector<double> data;
        fill_from_sequence(py::reinterpret_borrow<py::sequence>(obj), 0, shape, data);
        if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
            throw py::value_error("ragged nested sequence cannot become a tensor");
        }
        return Tensor(std::move(shape), std::move(data));
    }
    return Tensor::scalar(obj.cast<double>());
}

py::object tensor_to_list(const Tensor& t, size_t axis, int64_t& flat) {
    if (axis == t.shape().size()) return py::float_(t[flat++]);
    py::list out;
    for (int64_t i = 0; i < t.shape()[axis]; ++i) out.append(tensor_to_list(t, axis + 1, flat));
    return out;
}

std::vector<Tensor> tensors_from(const py::iterable& xs) {
    std::vector<Tensor> out;
    for (py::handle h : xs) out.push_back(tensor_from_object(py::reinterpret_borrow<py::object>(h)));
    return out;
}

// ------------------------------------------------------------- enum helpers

AlignKind parse_align(const std::string& s) {
    if (s == "cosine") return AlignKind::Cosine;
    if (s == "mae") return AlignKind::Mae;
    if (s == "pooled-cosine") return AlignKind::PooledCosine;
    throw py::value_error("unknown alignment loss '" + s + "' (cosine, mae, pooled-cosine)");
}

BridgePool parse_pool(const std::string& s) {
    if (s == "mean") return BridgePool::Mean;
    if (s == "max") return BridgePool::Max;
    throw py::value_error("unknown pooling '" + s + "' (mean, max)");
}

BridgeInit parse_init(const std::string& s) {
    if (s == "random") return BridgeInit::Random;
    if (s == "reference") return BridgeInit::FromReference;
    throw py::value_error("unknown bridge init '" + s + "' (random, reference)");
}

SimilarityObjective parse_objective(const std::string& s) {
    if (s == "maximize") return SimilarityObjective::Maximize;
    if (s == "minimize") return SimilarityObjective::Minimize;
    throw py::value_error("unknown objective '" + s + "' (maximize, minimize)");
}

SplitMode parse_split_mode(const std::string& s) {
    if (s == "subject") return SplitMode::SubjectDisjoint;
    if (s == "sample") return SplitMode::SampleWise;
    throw py::value_error("unknown split mode '" + s + "' (subject, sample)");
}

std::vector<LayerSpec> specs_for(const std::string& arch, int64_t dim) {
    ArchId id = parse_arch(arch);
    return id == ArchId::ConvStack ? conv_stack_specs(dim) : attention_stack_specs(dim);
}

std::optional<EvalSet> eval_set_from(const py::object& val) {
    if (val.is_none()) return std::nullopt;
    auto pair = val.cast<std::pair<py::iterable, std::vector<int64_t>>>();
    EvalSet set;
    set.xs = tensors_from(pair.first);
    set.labels = std::move(pair.second);
    return set;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() =
        "Cross-modality model reuse: train a compact low-rank bridge that maps a frozen "
        "new-modality encoder's representation into a frozen old-modality model so the old "
        "task head keeps working on the new signal.";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<LabelAccessError>(m, "LabelAccessError", PyExc_PermissionError);
    py::register_exception<DegenerateRepresentationError>(m, "DegenerateRepresentationError",
                                                          PyExc_ArithmeticError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    // ------------------------------------------------------------- tensors
    py::class_<Tensor>(m, "Tensor", py::buffer_protocol(),
                       "Dense float64 array, row-major; accepts nested lists or buffers.")
        .def(py::init(&tensor_from_object), py::arg("values"))
        .def_static(
            "zeros", [](Shape shape) { return Tensor(std::move(shape)); }, py::arg("shape"))
        .def_static("full", &Tensor::full, py::arg("shape"), py::arg("value"))
        .def_static("eye", &Tensor::eye, py::arg("n"))
        .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
        .def_property_readonly("rank", &Tensor::rank)
        .def_property_readonly("numel", &Tensor::numel)
        .def("item", &Tensor::item)
        .def("tolist",
             [](const Tensor& t) {
                 int64_t flat = 0;
                 return tensor_to_list(t, 0, flat);
             })
        .def("reshaped", &Tensor::reshaped, py::arg("shape"))
        .def("all_finite", &Tensor::all_finite)
        .def("__len__", [](const Tensor& t) { return t.rank() == 0 ? 1 : t.dim(0); })
        .def("__getitem__",
             [](const Tensor& t, int64_t i) {
                 if (i < 0 || i >= t.numel()) throw py::index_error();
                 return t[i];
             })
        .def("__repr__",
             [](const Tensor& t) { return "Tensor(shape=" + shape_str(t.shape()) + ")"; })
        .def_buffer([](Tensor& t) -> py::buffer_info {
            std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
            std::vector<py::ssize_t> strides(shape.size());
            py::ssize_t step = static_cast<py::ssize_t>(sizeof(double));
            for (size_t d = shape.size(); d-- > 0;) {
                strides[d] = step;
                step *= shape[d];
            }
            return py::buffer_info(t.data(), sizeof(double),
                                   py::format_descriptor<double>::format(),
                                   static_cast<py::ssize_t>(shape.size()), shape, strides);
        });
    m.def("allclose", &allclose, py::arg("a"), py::arg("b"), py::arg("atol") = 1e-12,
          py::arg("rtol") = 0.0);
    m.def("max_abs_diff", &max_abs_diff, py::arg("a"), py::arg("b"));

    // ---------------------------------------------------------------- data
    py::class_<LatentTaskSpec>(m, "LatentTaskSpec")
        .def_readwrite("class_count", &LatentTaskSpec::class_count)
        .def_readwrite("latent_dim", &LatentTaskSpec::latent_dim)
        .def_readwrite("noise_level", &LatentTaskSpec::noise_level)
        .def_readwrite("samples_per_subject", &LatentTaskSpec::samples_per_subject)
        .def_readwrite("subject_count", &LatentTaskSpec::subject_count);
    m.def("make_default_task", &make_default_task);
    m.def("make_latent_task", &make_latent_task, py::arg("classes"), py::arg("latent_dim"),
          py::arg("noise_level"), py::arg("samples_per_subject"), py::arg("subject_count"));

    py::class_<ModalitySpec>(m, "ModalitySpec")
        .def_readonly("name", &ModalitySpec::name)
        .def_readonly("channels", &ModalitySpec::channels)
        .def_readonly("seq_len", &ModalitySpec::seq_len)
        .def_property_readonly(
            "input_shape", [](const ModalitySpec& s) { return Shape{s.seq_len, s.channels}; });
    m.def("default_old_modality", &default_old_modality);
    m.def("default_new_modality", &default_new_modality);
    m.def("make_mixture_modality", &make_mixture_modality, py::arg("name"), py::arg("channels"),
          py::arg("seq_len"), py::arg("latent_dim"), py::arg("band_lo"), py::arg("band_hi"),
          py::arg("noise"), py::arg("seed"));

    py::class_<PairedSample>(m, "PairedSample")
        .def_readonly("x_a", &PairedSample::x_a)
        .def_readonly("x_b", &PairedSample::x_b)
        .def_readonly("label", &PairedSample::label)
        .def_readonly("subject", &PairedSample::subject);
    py::class_<PairedDataset>(m, "PairedDataset")
        .def_readonly("task", &PairedDataset::task)
        .def_readonly("mod_a", &PairedDataset::mod_a)
        .def_readonly("mod_b", &PairedDataset::mod_b)
        .def("__len__", [](const PairedDataset& d) { return d.samples.size(); })
        .def(
            "sample",
            [](const PairedDataset& d, size_t i) {
                if (i >= d.samples.size()) throw py::index_error();
                return d.samples[i];
            },
            py::arg("i"));
    m.def("generate_paired_dataset", &generate_paired_dataset, py::arg("task"), py::arg("mod_a"),
          py::arg("mod_b"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
    m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("data"));
    m.def("load_dataset", &load_dataset, py::arg("path"));
    m.def("pairing_intact", &pairing_intact, py::arg("data"));

    py::class_<SplitView>(m, "SplitView")
        .def("__len__", &SplitView::size)
        .def("signals_a", &SplitView::signals_a)
        .def("signals_b", &SplitView::signals_b)
        .def("training_labels", &SplitView::training_labels)
        .def("eval_labels", &SplitView::eval_labels)
        .def_property_readonly("indices", &SplitView::indices);
    py::class_<DatasetSplits>(m, "DatasetSplits")
        .def_readonly("old_split", &DatasetSplits::old_split)
        .def_readonly("new_split", &DatasetSplits::new_split)
        .def_readonly("val_split", &DatasetSplits::val_split)
        .def_readonly("pair_split", &DatasetSplits::pair_split);
    m.def(
        "split_dataset",
        [](const PairedDataset& data, const std::array<double, 4>& weights, uint64_t seed,
           const std::string& mode) { return split_dataset(data, weights, seed, parse_split_mode(mode)); },
        py::arg("data"), py::arg("weights"), py::arg("seed"), py::arg("mode") = "subject",
        py::keep_alive<0, 1>());
    m.def("subsample_pair_fraction", &subsample_pair_fraction, py::arg("splits"),
          py::arg("fraction"), py::arg("seed"), py::keep_alive<0, 1>());

    // -------------------------------------------------------------- models
    py::class_<EncoderModel>(m, "EncoderModel",
                             "Frozen-capable layer-stack encoder over (T, C) signals.")
        .def(py::init([](const std::string& modality, Shape input_shape, const std::string& arch,
                         int64_t dim, uint64_t seed) {
                 return EncoderModel(modality, std::move(input_shape), specs_for(arch, dim), seed);
             }),
             py::arg("modality"), py::arg("input_shape"), py::arg("arch"), py::arg("dim"),
             py::arg("seed"))
        .def_property_readonly("modality", &EncoderModel::modality)
        .def_property_readonly("input_shape",
                               [](const EncoderModel& e) { return e.input_shape(); })
        .def_property_readonly("layer_count", &EncoderModel::layer_count)
        .def_property_readonly("layer_shapes",
                               [](const EncoderModel& e) { return e.layer_shapes(); })
        .def_property_readonly("trainable_params",
                               [](const EncoderModel& e) {
                                   int64_t n = 0;
                                   for (const ParamPtr& p : e.params()) {
                                       if (p->trainable) n += p->value.numel();
                                   }
                                   return n;
                               })
        .def("forward_prefix",
             py::overload_cast<const Tensor&, int64_t>(&EncoderModel::forward_prefix, py::const_),
             py::arg("x"), py::arg("m"))
        .def("forward_suffix",
             py::overload_cast<const Tensor&, int64_t>(&EncoderModel::forward_suffix, py::const_),
             py::arg("h"), py::arg("l"))
        .def("full_forward", &EncoderModel::full_forward, py::arg("x"))
        .def("clone", &EncoderModel::clone, py::arg("trainable"))
        .def("freeze", &EncoderModel::freeze)
        .def_property_readonly("frozen", &EncoderModel::frozen);

    py::class_<TaskHead>(m, "TaskHead", "Linear classifier over the pooled final representation.")
        .def_property_readonly("class_count", &TaskHead::class_count)
        .def_property_readonly("input_dim", &TaskHead::input_dim)
        .def("freeze", &TaskHead::freeze)
        .def("logits", py::overload_cast<const Tensor&>(&TaskHead::logits, py::const_),
             py::arg("h"));
    m.def("make_task_head", &make_task_head, py::arg("dim"), py::arg("classes"), py::arg("seed"));
    m.def(
        "stack_batch", [](const py::iterable& xs) { return stack_batch(tensors_from(xs)); },
        py::arg("xs"));
    m.def("predict", &predict, py::arg("model"), py::arg("head"), py::arg("x"));
    m.def(
        "pretrain_supervised",
        [](EncoderModel& model, TaskHead& head, const py::iterable& xs, std::vector<int64_t> ys,
           int64_t epochs, double lr, int64_t batch, uint64_t seed) {
            PretrainOptions opts;
            opts.epochs = epochs;
            opts.lr = lr;
            opts.batch = batch;
            opts.seed = seed;
            std::vector<Tensor> xt = tensors_from(xs);
            py::gil_scoped_release release;
            return pretrain_supervised(model, head, xt, ys, opts).epoch_loss;
        },
        py::arg("model"), py::arg("head"), py::arg("xs"), py::arg("ys"), py::arg("epochs") = 50,
        py::arg("lr") = 1e-3, py::arg("batch") = 32, py::arg("seed") = 0,
        "Trains encoder+head with cross-entropy, freezes both, returns per-epoch loss.");
    m.def("save_model_checkpoint",
          [](const std::string& path, const EncoderModel& model, const TaskHead* head) {
              save_model_checkpoint(path, model, head);
          },
          py::arg("path"), py::arg("model"), py::arg("head") = nullptr);
    py::class_<ModelCheckpoint>(m, "ModelCheckpoint")
        .def_readonly("model", &ModelCheckpoint::model)
        .def_readonly("head", &ModelCheckpoint::head);
    m.def("load_model_checkpoint", &load_model_checkpoint, py::arg("path"));

    // ------------------------------------------------- similarity & metrics
    m.def("gram", &gram, py::arg("H"));
    m.def("hsic", &hsic, py::arg("Ka"), py::arg("Kb"));
    m.def("cka_linear", &cka_linear, py::arg("Ha"), py::arg("Hb"),
          "Linear centered-kernel alignment between two (n, p) feature matrices.");
    m.def(
        "layer_representation",
        [](const EncoderModel& model, const py::iterable& xs, int64_t layer) {
            return layer_representation(model, tensors_from(xs), layer).values;
        },
        py::arg("model"), py::arg("xs"), py::arg("layer"),
        "Per-sample pooled representation of one layer as an (n, N*d) matrix.");

    py::class_<MetricSet>(m, "MetricSet")
        .def_readonly("balanced_accuracy", &MetricSet::balanced_accuracy)
        .def_readonly("f1_macro", &MetricSet::f1_macro)
        .def_readonly("f1_weighted", &MetricSet::f1_weighted)
        .def_readonly("precision", &MetricSet::precision)
        .def_readonly("recall", &MetricSet::recall)
        .def_readonly("f1", &MetricSet::f1)
        .def_readonly("confusion", &MetricSet::confusion);
    m.def(
        "compute_metrics",
        [](std::vector<int64_t> yt, std::vector<int64_t> yp, int64_t class_count) {
            return compute_metrics(yt, yp, class_count);
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("class_count") = -1);

    // -------------------------------------------------------------- bridge
    py::class_<BridgeShapeSpec>(m, "BridgeShapeSpec")
        .def(py::init([](int64_t input_dim, int64_t out_tokens, int64_t out_dim, int64_t rank,
                         int64_t prototypes) {
                 BridgeShapeSpec s{input_dim, out_tokens, out_dim, rank, prototypes};
                 validate_bridge_spec(s);
                 return s;
             }),
             py::arg("input_dim"), py::arg("out_tokens"), py::arg("out_dim"), py::arg("rank"),
             py::arg("prototypes"))
        .def_readwrite("input_dim", &BridgeShapeSpec::input_dim)
        .def_readwrite("out_tokens", &BridgeShapeSpec::out_tokens)
        .def_readwrite("out_dim", &BridgeShapeSpec::out_dim)
        .def_readwrite("rank", &BridgeShapeSpec::rank)
        .def_readwrite("prototypes", &BridgeShapeSpec::prototypes);
    py::class_<BridgeParams>(m, "BridgeParams")
        .def_readonly("spec", &BridgeParams::spec)
        .def_property_readonly("param_count", &BridgeParams::param_count)
        .def_property_readonly("A", [](const BridgeParams& b) { return b.A->value; })
        .def_property_readonly("B", [](const BridgeParams& b) { return b.B->value; })
        .def_property_readonly("P", [](const BridgeParams& b) { return b.P->value; });
    m.def("bridge_param_count", &bridge_param_count, py::arg("spec"));
    m.def("full_rank_param_count", &full_rank_param_count, py::arg("in_tokens"), py::arg("spec"));
    m.def(
        "init_bridge",
        [](const BridgeShapeSpec& spec, const std::string& init, uint64_t seed,
           const py::object& reference) {
            if (reference.is_none()) return init_bridge(spec, parse_init(init), seed);
            Tensor ref = tensor_from_object(reference);
            return init_bridge(spec, parse_init(init), seed, &ref);
        },
        py::arg("spec"), py::arg("init") = "random", py::arg("seed") = 0,
        py::arg("reference") = py::none());
    m.def(
        "bridge_forward",
        [](const Tensor& h, const BridgeParams& params, const std::string& pool) {
            return bridge_forward(h, params, parse_pool(pool));
        },
        py::arg("h"), py::arg("params"), py::arg("pool") = "mean");
    m.def("save_bridge_checkpoint", &save_bridge_checkpoint, py::arg("path"), py::arg("params"));
    m.def("load_bridge_checkpoint", &load_bridge_checkpoint, py::arg("path"));

    // ------------------------------------------------------------ transfer
    py::class_<PositionSelection>(m, "PositionSelection")
        .def(py::init<>())
        .def_readwrite("input_layer", &PositionSelection::input_layer)
        .def_readwrite("output_layer", &PositionSelection::output_layer)
        .def_readonly("probe_scores", &PositionSelection::probe_scores)
        .def_readonly("cka_scores", &PositionSelection::cka_scores)
        .def_readonly("probe_degenerate", &PositionSelection::probe_degenerate)
        .def_readonly("warnings", &PositionSelection::warnings);
    m.def(
        "select_positions",
        [](const EncoderModel& old_model, const TaskHead& head, const EncoderModel& new_model,
           const py::iterable& xs_old, const py::iterable& xs_new, double probe_l2,
           int64_t probe_folds, int64_t cka_row_cap, uint64_t seed, const std::string& objective) {
            PositionSelectionOptions opts;
            opts.probe_l2 = probe_l2;
            opts.probe_folds = probe_folds;
            opts.cka_row_cap = cka_row_cap;
            opts.seed = seed;
            opts.objective = parse_objective(objective);
            std::vector<Tensor> xo = tensors_from(xs_old), xn = tensors_from(xs_new);
            py::gil_scoped_release release;
            return select_positions(old_model, head, new_model, xo, xn, opts);
        },
        py::arg("old_model"), py::arg("head"), py::arg("new_model"), py::arg("xs_old"),
        py::arg("xs_new"), py::arg("probe_l2") = kDefaultProbeL2,
        py::arg("probe_folds") = kDefaultProbeFolds, py::arg("cka_row_cap") = kDefaultCkaRowCap,
        py::arg("seed") = 0, py::arg("objective") = "maximize",
        "Two-stage selection: probe the new encoder's layers on teacher pseudo-labels, then "
        "pick the most similar old layer.");

    m.def(
        "alignment_loss",
        [](const Tensor& h, const Tensor& h_tilde, const std::string& kind) {
            return alignment_loss(h, h_tilde, parse_align(kind));
        },
        py::arg("h"), py::arg("h_tilde"), py::arg("kind") = "cosine");

    py::class_<TrainingHistory>(m, "TrainingHistory")
        .def_readonly("loss", &TrainingHistory::loss)
        .def_readonly("val_metric", &TrainingHistory::val_metric)
        .def_readonly("zero_norm_rows", &TrainingHistory::zero_norm_rows);
    m.def(
        "train_bridge",
        [](const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
           const py::iterable& xs_old, const py::iterable& xs_new,
           const PositionSelection& positions, BridgeParams& bridge, int64_t epochs, int64_t batch,
           double lr, const std::string& loss, const std::string& pool, int64_t align_layer,
           uint64_t seed, const py::object& val) {
            TransferTrainOptions opts;
            opts.epochs = epochs;
            opts.batch = batch;
            opts.lr = lr;
            opts.loss_kind = parse_align(loss);
            opts.pool = parse_pool(pool);
            opts.align_layer = align_layer;
            opts.seed = seed;
            std::optional<EvalSet> vs = eval_set_from(val);
            if (vs) opts.val = &*vs;
            std::vector<Tensor> xo = tensors_from(xs_old), xn = tensors_from(xs_new);
            py::gil_scoped_release release;
            return train_bridge(old_model, new_model, head, xo, xn, positions, bridge, opts);
        },
        py::arg("old_model"), py::arg("new_model"), py::arg("head"), py::arg("xs_old"),
        py::arg("xs_new"), py::arg("positions"), py::arg("bridge"), py::arg("epochs") = 50,
        py::arg("batch") = 32, py::arg("lr") = 1e-3, py::arg("loss") = "cosine",
        py::arg("pool") = "mean", py::arg("align_layer") = -1, py::arg("seed") = 0,
        py::arg("val") = py::none(),
        "Trains only the bridge to align the bridged representation with the old encoder's.");
    m.def(
        "bridged_predict",
        [](const EncoderModel& old_model, const EncoderModel& new_model, const TaskHead& head,
           const BridgeParams& bridge, const PositionSelection& positions, const Tensor& x_new,
           const std::string& pool) {
            return bridged_predict(old_model, new_model, head, bridge, positions, x_new,
                                   parse_pool(pool));
        },
        py::arg("old_model"), py::arg("new_model"), py::arg("head"), py::arg("bridge"),
        py::arg("positions"), py::arg("x_new"), py::arg("pool") = "mean");
    m.def("predicted_labels", &predicted_labels, py::arg("probs"));

    py::class_<StudentResult>(m, "StudentResult")
        .def_readonly("student", &StudentResult::student)
        .def_readonly("head", &StudentResult::head)
        .def_readonly("history", &StudentResult::history)
        .def_readonly("trainable_params", &StudentResult::trainable_params);
    m.def(
        "train_kd",
        [](const EncoderModel& new_model, const EncoderModel& old_model, const TaskHead& old_head,
           const py::iterable& xs_old, const py::iterable& xs_new, int64_t epochs, int64_t batch,
           double lr, uint64_t seed, const py::object& val) {
            KdOptions opts;
            opts.epochs = epochs;
            opts.batch = batch;
            opts.lr = lr;
            opts.seed = seed;
            std::optional<EvalSet> vs = eval_set_from(val);
            if (vs) opts.val = &*vs;
            std::vector<Tensor> xo = tensors_from(xs_old), xn = tensors_from(xs_new);
            py::gil_scoped_release release;
            return train_kd(new_model, old_model, old_head, xo, xn, opts);
        },
        py::arg("new_model"), py::arg("old_model"), py::arg("old_head"), py::arg("xs_old"),
        py::arg("xs_new"), py::arg("epochs") = 50, py::arg("batch") = 32, py::arg("lr") = 1e-3,
        py::arg("seed") = 0, py::arg("val") = py::none());

    py::class_<ContrastResult>(m, "ContrastResult")
        .def_readonly("student", &ContrastResult::student)
        .def_property_readonly("proj_w", [](const ContrastResult& c) { return c.proj_w->value; })
        .def_property_readonly("proj_b", [](const ContrastResult& c) { return c.proj_b->value; })
        .def_readonly("history", &ContrastResult::history)
        .def_readonly("trainable_params", &ContrastResult::trainable_params);
    m.def(
        "train_kd_contrast",
        [](const EncoderModel& new_model, const EncoderModel& old_model,
           const py::iterable& xs_old, const py::iterable& xs_new, double tau, int64_t epochs,
           int64_t batch, double lr, uint64_t seed) {
            KdContrastOptions opts;
            opts.tau = tau;
            opts.epochs = epochs;
            opts.batch = batch;
            opts.lr = lr;
            opts.seed = seed;
            std::vector<Tensor> xo = tensors_from(xs_old), xn = tensors_from(xs_new);
            py::gil_scoped_release release;
            return train_kd_contrast(new_model, old_model, xo, xn, opts);
        },
        py::arg("new_model"), py::arg("old_model"), py::arg("xs_old"), py::arg("xs_new"),
        py::arg("tau") = kDefaultInfoNceTau, py::arg("epochs") = 50, py::arg("batch") = 32,
        py::arg("lr") = 1e-3, py::arg("seed") = 0);
    m.def("kd_contrast_predict", &kd_contrast_predict, py::arg("student"), py::arg("proj_w"),
          py::arg("proj_b"), py::arg("old_head"), py::arg("x_new"));
    m.def("random_baseline", &random_baseline, py::arg("class_count"), py::arg("n"),
          py::arg("seed"));
    m.def(
        "prediction_agreement",
        [](std::vector<int64_t> a, std::vector<int64_t> b) { return prediction_agreement(a, b); },
        py::arg("a"), py::arg("b"));

    // ---------------------------------------------------------- experiments
    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("dataset_file", &ExperimentConfig::dataset_file)
        .def_readwrite("classes", &ExperimentConfig::classes)
        .def_readwrite("latent_dim", &ExperimentConfig::latent_dim)
        .def_readwrite("noise_level", &ExperimentConfig::noise_level)
        .def_readwrite("samples_per_subject", &ExperimentConfig::samples_per_subject)
        .def_readwrite("subjects", &ExperimentConfig::subjects)
        .def_readwrite("data_seed", &ExperimentConfig::data_seed)
        .def_readwrite("pair_fraction", &ExperimentConfig::pair_fraction)
        .def_readwrite("old_dim", &ExperimentConfig::old_dim)
        .def_readwrite("new_dim", &ExperimentConfig::new_dim)
        .def_readwrite("pretrain_epochs", &ExperimentConfig::pretrain_epochs)
        .def_readwrite("rank", &ExperimentConfig::rank)
        .def_readwrite("prototypes", &ExperimentConfig::prototypes)
        .def_readwrite("bridge_epochs", &ExperimentConfig::bridge_epochs)
        .def_readwrite("bridge_lr", &ExperimentConfig::bridge_lr)
        .def_readwrite("kd_epochs", &ExperimentConfig::kd_epochs)
        .def_readwrite("contrast_epochs", &ExperimentConfig::contrast_epochs)
        .def_readwrite("rank_grid", &ExperimentConfig::rank_grid)
        .def_readwrite("prototype_grid", &ExperimentConfig::prototype_grid)
        .def_readwrite("seeds", &ExperimentConfig::seeds)
        .def_readwrite("base_seed", &ExperimentConfig::base_seed)
        .def_readwrite("out_dir", &ExperimentConfig::out_dir)
        .def_readwrite("pair_fractions", &ExperimentConfig::pair_fractions)
        .def_property(
            "methods",
            [](const ExperimentConfig& c) {
                std::vector<std::string> out;
                for (Method mth : c.methods) out.push_back(method_name(mth));
                return out;
            },
            [](ExperimentConfig& c, const std::vector<std::string>& names) {
                std::vector<Method> parsed;
                for (const std::string& n : names) parsed.push_back(parse_method(n));
                c.methods = std::move(parsed);
            });
    m.def("parse_config_text", &parse_config_text, py::arg("text"));
    m.def("load_config", &load_config, py::arg("path"));
    m.def("config_echo", &config_echo, py::arg("cfg"));

    py::class_<MethodReport>(m, "MethodReport")
        .def_readonly("method", &MethodReport::method)
        .def_readonly("input_modality", &MethodReport::input_modality)
        .def_readonly("seeds", &MethodReport::seeds)
        .def_readonly("bacc_mean", &MethodReport::bacc_mean)
        .def_readonly("f1m_mean", &MethodReport::f1m_mean)
        .def_readonly("f1w_mean", &MethodReport::f1w_mean)
        .def_readonly("bacc_std", &MethodReport::bacc_std)
        .def_readonly("f1m_std", &MethodReport::f1m_std)
        .def_readonly("f1w_std", &MethodReport::f1w_std)
        .def_readonly("params", &MethodReport::params)
        .def_readonly("input_layer", &MethodReport::input_layer)
        .def_readonly("output_layer", &MethodReport::output_layer)
        .def_readonly("per_seed", &MethodReport::per_seed)
        .def_readonly("loss_history", &MethodReport::loss_history)
        .def_readonly("val_history", &MethodReport::val_history)
        .def_readonly("probe_scores", &MethodReport::probe_scores)
        .def_readonly("cka_scores", &MethodReport::cka_scores)
        .def_readonly("warnings", &MethodReport::warnings);
    py::class_<GridCell>(m, "GridCell")
        .def_readonly("rank", &GridCell::rank)
        .def_readonly("prototypes", &GridCell::prototypes)
        .def_readonly("params", &GridCell::params)
        .def_readonly("percent_of_full", &GridCell::percent_of_full);
    py::class_<TransferReport>(m, "TransferReport")
        .def_readonly("methods", &TransferReport::methods)
        .def_readonly("grid", &TransferReport::grid)
        .def_readonly("full_rank_params", &TransferReport::full_rank_params)
        .def_readonly("class_count", &TransferReport::class_count)
        .def_readonly("config_text", &TransferReport::config_text);
    m.def("run_experiment", &run_experiment, py::arg("cfg"),
          py::call_guard<py::gil_scoped_release>(),
          "Full multi-seed run of every configured method; deterministic for a given config.");

    py::class_<PositionCell>(m, "PositionCell")
        .def_readonly("input_layer", &PositionCell::input_layer)
        .def_readonly("output_layer", &PositionCell::output_layer)
        .def_readonly("ok", &PositionCell::ok)
        .def_readonly("error", &PositionCell::error)
        .def_readonly("bacc_mean", &PositionCell::bacc_mean)
        .def_readonly("f1m_mean", &PositionCell::f1m_mean)
        .def_readonly("f1w_mean", &PositionCell::f1w_mean);
    py::class_<PositionAblation>(m, "PositionAblation")
        .def_readonly("cells", &PositionAblation::cells)
        .def_readonly("completed", &PositionAblation::completed)
        .def_readonly("fixed_average_bacc", &PositionAblation::fixed_average_bacc)
        .def_readonly("selected_bacc", &PositionAblation::selected_bacc)
        .def_readonly("selected_input_layer", &PositionAblation::selected_input_layer)
        .def_readonly("selected_output_layer", &PositionAblation::selected_output_layer);
    m.def("fixed_position_ablation", &fixed_position_ablation, py::arg("cfg"),
          py::call_guard<py::gil_scoped_release>());

    py::class_<SweepRow>(m, "SweepRow")
        .def_readonly("x", &SweepRow::x)
        .def_readonly("rank", &SweepRow::rank)
        .def_readonly("prototypes", &SweepRow::prototypes)
        .def_readonly("params", &SweepRow::params)
        .def_readonly("bacc_mean", &SweepRow::bacc_mean)
        .def_readonly("bacc_std", &SweepRow::bacc_std);
    m.def("rank_ablation", &rank_ablation, py::arg("cfg"),
          py::call_guard<py::gil_scoped_release>());
    m.def("prototype_ablation", &prototype_ablation, py::arg("cfg"),
          py::call_guard<py::gil_scoped_release>());
    m.def("pair_fraction_ablation", &pair_fraction_ablation, py::arg("cfg"),
          py::call_guard<py::gil_scoped_release>());

    m.def(
        "render_report",
        [](const TransferReport& report, const std::string& format) {
            return render_report(report, parse_report_format(format));
        },
        py::arg("report"), py::arg("format") = "json-lines");
    m.def(
        "render_position_ablation",
        [](const PositionAblation& table, const std::string& format) {
            return render_position_ablation(table, parse_report_format(format));
        },
        py::arg("table"), py::arg("format") = "json-lines");
    m.def(
        "render_sweep",
        [](const std::string& name, const std::vector<SweepRow>& rows, const std::string& format) {
            return render_sweep(name, rows, parse_report_format(format));
        },
        py::arg("name"), py::arg("rows"), py::arg("format") = "json-lines");
    m.def(
        "export_report",
        [](const TransferReport& report, const std::string& format, const std::string& out_dir) {
            export_report(report, parse_report_format(format), out_dir);
        },
        py::arg("report"), py::arg("format"), py::arg("out_dir"));
    m.def("load_report_jsonl", &load_report_jsonl, py::arg("path"));
    m.def("write_run_meta", &write_run_meta, py::arg("out_dir"), py::arg("wall_seconds"));
}
