#pragma once

// Replica scheduling. Replica r always draws from Stream(seed, r), so the
// split of [begin, end) across workers only affects wall time: each worker
// fills its own tally over a contiguous block, and blocks are merged and
// their records concatenated in replica order.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

#include "sandlab/error.hpp"

namespace sandlab {

struct ReplicaRange {
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

inline std::vector<ReplicaRange> split_replicas(std::uint64_t begin, std::uint64_t end, int workers) {
    require(workers >= 1, "worker count must be at least 1");
    require(begin <= end, "empty replica range");
    const std::uint64_t n = end - begin;
    const auto w = static_cast<std::uint64_t>(workers);
    std::vector<ReplicaRange> out;
    for (std::uint64_t i = 0; i < w; ++i) out.push_back({begin + n * i / w, begin + n * (i + 1) / w});
    return out;
}

/// Runs replicas [begin, end). `make_worker()` builds per-thread state with
/// `void operator()(std::uint64_t replica, Tally&, std::vector<Record>*)`;
/// `make_tally()` returns an empty tally with `merge(const Tally&)`.
/// Records are collected only when `records` is non-null.
template <class Tally, class Record, class MakeTally, class MakeWorker>
void run_replicas(std::uint64_t begin, std::uint64_t end, int workers, MakeTally make_tally, MakeWorker make_worker,
                  Tally& into, std::vector<Record>* records) {
    auto ranges = split_replicas(begin, end, workers);
    std::vector<Tally> tallies;
    tallies.reserve(ranges.size());
    for (std::size_t i = 0; i < ranges.size(); ++i) tallies.push_back(make_tally());
    std::vector<std::vector<Record>> recs(ranges.size());
    std::vector<std::exception_ptr> errors(ranges.size());

    auto job = [&](std::size_t w) {
        try {
            auto worker = make_worker();
            std::vector<Record>* out = records ? &recs[w] : nullptr;
            for (std::uint64_t r = ranges[w].begin; r < ranges[w].end; ++r) worker(r, tallies[w], out);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    if (ranges.size() == 1) {
        job(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < ranges.size(); ++w) threads.emplace_back(job, w);
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (std::size_t w = 0; w < ranges.size(); ++w) {
        into.merge(tallies[w]);
        if (records) records->insert(records->end(), recs[w].begin(), recs[w].end());
    }
}

}  // namespace sandlab
