#include "biox/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "biox/serialize.hpp"

namespace biox {

namespace {

std::string spec_line(const LayerSpec& s) {
    std::ostringstream out;
    out << "layer=" << layer_kind_name(s.kind) << " dim=" << s.dim;
    if (s.kind == LayerKind::ConvBlock) out << " kernel=" << s.kernel << " stride=" << s.stride;
    return out.str();
}

LayerSpec parse_spec_line(const std::string& body) {
    std::istringstream in(body);
    std::string kind_name;
    in >> kind_name;
    LayerSpec s;
    s.kind = layer_kind_from_name(kind_name);
    std::string kv;
    while (in >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed layer field '" + kv + "'");
        std::string key = kv.substr(0, eq);
        int64_t value = std::stoll(kv.substr(eq + 1));
        if (key == "dim") {
            s.dim = value;
        } else if (key == "kernel") {
            s.kernel = value;
        } else if (key == "stride") {
            s.stride = value;
        } else {
            throw std::runtime_error("checkpoint: unknown layer field '" + key + "'");
        }
    }
    return s;
}

void write_param_block(std::ostream& out, const Tensor& t) {
    io::write_f64_block(out, std::span<const double>(t.data(), static_cast<size_t>(t.numel())));
}

void read_param_block(std::istream& in, Tensor& t, const std::string& name) {
    std::vector<double> data = io::read_f64_block(in);
    if (static_cast<int64_t>(data.size()) != t.numel()) {
        throw std::runtime_error("checkpoint: parameter '" + name + "' holds " + std::to_string(data.size()) +
                                 " values, expected " + std::to_string(t.numel()));
    }
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = data[static_cast<size_t>(i)];
}

}  // namespace

void save_model_checkpoint(const std::string& path, const EncoderModel& model, const TaskHead* head) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

    std::ostringstream header;
    header << "modality=" << model.modality() << "\n";
    header << "input=" << model.input_shape()[0] << "," << model.input_shape()[1] << "\n";
    for (const LayerSpec& s : model.specs()) header << spec_line(s) << "\n";
    header << "frozen=" << (model.frozen() ? 1 : 0) << "\n";
    if (head) {
        header << "head_classes=" << head->class_count() << "\n";
        header << "head_frozen=" << (head->W->trainable ? 0 : 1) << "\n";
    }

    io::write_magic(out, kModelMagic);
    io::write_u32(out, kModelVersion);
    io::write_text(out, header.str());
    for (const ParamPtr& p : model.params()) write_param_block(out, p->value);
    if (head) {
        write_param_block(out, head->W->value);
        write_param_block(out, head->b->value);
    }
    if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    io::check_magic(in, kModelMagic, "checkpoint");
    uint32_t version = io::read_u32(in);
    if (version != kModelVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }

    std::string modality;
    Shape input_shape;
    std::vector<LayerSpec> specs;
    bool frozen = false;
    int64_t head_classes = 0;
    bool head_frozen = false;

    std::istringstream header(io::read_text(in));
    std::string line;
    while (std::getline(header, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "modality") {
            modality = value;
        } else if (key == "input") {
            auto comma = value.find(',');
            if (comma == std::string::npos) throw std::runtime_error("checkpoint: malformed input shape");
            input_shape = {std::stoll(value.substr(0, comma)), std::stoll(value.substr(comma + 1))};
        } else if (key == "layer") {
            specs.push_back(parse_spec_line(value));
        } else if (key == "frozen") {
            frozen = value == "1";
        } else if (key == "head_classes") {
            head_classes = std::stoll(value);
        } else if (key == "head_frozen") {
            head_frozen = value == "1";
        } else {
            throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
        }
    }

    ModelCheckpoint ckpt{EncoderModel(modality, input_shape, specs, /*seed=*/0), std::nullopt};
    for (const ParamPtr& p : ckpt.model.params()) {
        read_param_block(in, p->value, p->name);
        p->trainable = !frozen;
    }
    if (head_classes > 0) {
        int64_t d = ckpt.model.layer_shapes().back().second;
        TaskHead head = make_task_head(d, head_classes, /*seed=*/0);
        read_param_block(in, head.W->value, "head.W");
        read_param_block(in, head.b->value, "head.b");
        head.W->trainable = !head_frozen;
        head.b->trainable = !head_frozen;
        ckpt.head = std::move(head);
    }
    return ckpt;
}

void save_bridge_checkpoint(const std::string& path, const BridgeParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

    const BridgeShapeSpec& s = params.spec;
    std::ostringstream header;
    header << "input_dim=" << s.input_dim << "\n";
    header << "out_tokens=" << s.out_tokens << "\n";
    header << "out_dim=" << s.out_dim << "\n";
    header << "rank=" << s.rank << "\n";
    header << "prototypes=" << s.prototypes << "\n";

    io::write_magic(out, kBridgeMagic);
    io::write_u32(out, kModelVersion);
    io::write_text(out, header.str());
    for (const ParamPtr& p : params.params()) write_param_block(out, p->value);
    if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

BridgeParams load_bridge_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    io::check_magic(in, kBridgeMagic, "bridge checkpoint");
    uint32_t version = io::read_u32(in);
    if (version != kModelVersion) {
        throw std::runtime_error("bridge checkpoint: unsupported version " + std::to_string(version));
    }

    BridgeShapeSpec spec;
    std::istringstream header(io::read_text(in));
    std::string line;
    while (std::getline(header, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("bridge checkpoint: malformed header line '" + line + "'");
        }
        std::string key = line.substr(0, eq);
        int64_t value = std::stoll(line.substr(eq + 1));
        if (key == "input_dim") {
            spec.input_dim = value;
        } else if (key == "out_tokens") {
            spec.out_tokens = value;
        } else if (key == "out_dim") {
            spec.out_dim = value;
        } else if (key == "rank") {
            spec.rank = value;
        } else if (key == "prototypes") {
            spec.prototypes = value;
        } else {
            throw std::runtime_error("bridge checkpoint: unknown header key '" + key + "'");
        }
    }

    BridgeParams params = init_bridge(spec, BridgeInit::Random, /*seed=*/0);
    for (const ParamPtr& p : params.params()) read_param_block(in, p->value, p->name);
    return params;
}

}  // namespace biox
