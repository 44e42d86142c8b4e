#pragma once

// Checkpointed replica runs. A run covers replicas [0, replicas); the
// checkpoint stores the merged tally of a prefix [0, done), so resuming
// continues with stream `done` and ends with the same tally as an
// uninterrupted run.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "sandlab/io.hpp"
#include "sandlab/runner.hpp"

namespace sandlab {

struct RunControl {
    std::uint64_t replicas = 1;
    int workers = 1;
    std::filesystem::path checkpoint;  ///< empty: no checkpointing
    std::uint64_t checkpoint_every = 0;  ///< 0: only when stopping early
    std::uint64_t stop_after = 0;        ///< 0: run to completion
    bool resume = false;
};

struct RunOutcome {
    std::uint64_t begin = 0;  ///< first replica run in this invocation
    std::uint64_t done = 0;
    bool complete = false;
    double wall_seconds = 0;
};

template <class Tally, class Record, class MakeTally, class MakeWorker, class ToJson, class FromJson>
RunOutcome run_checkpointed(const RunControl& ctl, const nlohmann::json& fingerprint, MakeTally make_tally,
                            MakeWorker make_worker, ToJson to_json_fn, FromJson from_json_fn, Tally& tally,
                            std::vector<Record>* records) {
    const auto t0 = std::chrono::steady_clock::now();
    require(ctl.workers >= 1, "--workers must be at least 1");
    RunOutcome out;
    tally = make_tally();
    if (ctl.resume) {
        if (ctl.checkpoint.empty()) throw CheckpointError("--resume needs --checkpoint");
        Checkpoint c = load_checkpoint(ctl.checkpoint);
        if (c.fingerprint != fingerprint) throw CheckpointError("checkpoint was written with a different configuration");
        if (c.replicas_done > ctl.replicas) throw CheckpointError("checkpoint holds more replicas than requested");
        try {
            tally = from_json_fn(c.tally);
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError(std::string("checkpoint tally unreadable: ") + e.what());
        }
        out.begin = c.replicas_done;
    }
    const std::uint64_t target = ctl.stop_after ? std::min(ctl.replicas, std::max(ctl.stop_after, out.begin)) : ctl.replicas;
    std::uint64_t cur = out.begin;
    auto save = [&] {
        if (!ctl.checkpoint.empty()) save_checkpoint(ctl.checkpoint, {fingerprint, cur, to_json_fn(tally)});
    };
    while (cur < target) {
        const std::uint64_t next = ctl.checkpoint_every ? std::min(target, cur + ctl.checkpoint_every) : target;
        run_replicas<Tally, Record>(cur, next, ctl.workers, make_tally, make_worker, tally, records);
        cur = next;
        if (ctl.checkpoint_every) save();
    }
    if (!ctl.checkpoint_every && cur < ctl.replicas) save();
    out.done = cur;
    out.complete = cur == ctl.replicas;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace sandlab
