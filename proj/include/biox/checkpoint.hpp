#pragma once

// Model checkpoint container.
//
// Layout: 8 magic bytes "BIOXMDL1", u32 version, u64 header length, a text
// header (key=value lines describing modality, input shape, layer specs, head
// size and frozen flags), then one block per parameter tensor in declaration
// order — u64 element count followed by little-endian 64-bit floats. Head
// weights, when present, follow the encoder parameters.

#include <optional>
#include <string>

#include "biox/bridge.hpp"
#include "biox/model.hpp"

namespace biox {

inline constexpr char kModelMagic[8] = {'B', 'I', 'O', 'X', 'M', 'D', 'L', '1'};
inline constexpr uint32_t kModelVersion = 1;

struct ModelCheckpoint {
    EncoderModel model;
    std::optional<TaskHead> head;
};

void save_model_checkpoint(const std::string& path, const EncoderModel& model, const TaskHead* head = nullptr);
ModelCheckpoint load_model_checkpoint(const std::string& path);

// Bridge checkpoints use the same layout family: magic, version, text header
// carrying the shape spec, then the A, B, P blocks.
inline constexpr char kBridgeMagic[8] = {'B', 'I', 'O', 'X', 'B', 'R', 'G', '1'};

void save_bridge_checkpoint(const std::string& path, const BridgeParams& params);
BridgeParams load_bridge_checkpoint(const std::string& path);

}  // namespace biox
