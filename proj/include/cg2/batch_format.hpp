#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cg2/example.hpp"
#include "cg2/serialize.hpp"

namespace cg2 {

// CG2B batch file: little-endian.
//   header: magic "CG2B", version u32 = 1, n_ctx u32, vocab u32, count u64
//   per example: input u32*n_ctx, target u32*n_ctx, loss_mask u8*n_ctx,
//                prefix_len u32, objective_tag u8, domain_tag u8

constexpr char kBatchMagic[4] = {'C', 'G', '2', 'B'};
constexpr uint32_t kBatchVersion = 1;

struct BatchFile {
    uint32_t n_ctx = 0;
    uint32_t vocab = 0;
    std::vector<TrainingExample> examples;
};

inline void write_batch_file(const std::string& path, const BatchFile& batch) {
    auto f = open_out(path);
    write_magic(f, kBatchMagic);
    write_le<uint32_t>(f, kBatchVersion);
    write_le<uint32_t>(f, batch.n_ctx);
    write_le<uint32_t>(f, batch.vocab);
    write_le<uint64_t>(f, batch.examples.size());
    for (const TrainingExample& ex : batch.examples) {
        if (ex.input.size() != batch.n_ctx || ex.target.size() != batch.n_ctx ||
            ex.loss_mask.size() != batch.n_ctx)
            throw DataError("example length does not match batch n_ctx");
        write_array_le(f, ex.input.data(), batch.n_ctx);
        write_array_le(f, ex.target.data(), batch.n_ctx);
        write_array_le(f, ex.loss_mask.data(), batch.n_ctx);
        write_le<uint32_t>(f, ex.prefix_len);
        write_le<uint8_t>(f, static_cast<uint8_t>(ex.objective));
        write_le<uint8_t>(f, static_cast<uint8_t>(ex.domain));
    }
    if (!f) throw DataError("write failed: " + path);
}

inline BatchFile read_batch_file(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, kBatchMagic, path);
    uint32_t version = read_le<uint32_t>(f);
    if (version != kBatchVersion)
        throw DataError("unsupported CG2B version " + std::to_string(version) + " in " + path);
    BatchFile batch;
    batch.n_ctx = read_le<uint32_t>(f);
    batch.vocab = read_le<uint32_t>(f);
    uint64_t count = read_le<uint64_t>(f);
    batch.examples.resize(count);
    for (TrainingExample& ex : batch.examples) {
        ex.input.resize(batch.n_ctx);
        ex.target.resize(batch.n_ctx);
        ex.loss_mask.resize(batch.n_ctx);
        read_array_le(f, ex.input.data(), batch.n_ctx);
        read_array_le(f, ex.target.data(), batch.n_ctx);
        read_array_le(f, ex.loss_mask.data(), batch.n_ctx);
        ex.prefix_len = read_le<uint32_t>(f);
        uint8_t tag = read_le<uint8_t>(f);
        if (tag > 3) throw DataError("bad objective tag in " + path);
        ex.objective = static_cast<ObjectiveTag>(tag);
        uint8_t dom = read_le<uint8_t>(f);
        if (dom > 1) throw DataError("bad domain tag in " + path);
        ex.domain = static_cast<Domain>(dom);
    }
    return batch;
}

}  // namespace cg2
