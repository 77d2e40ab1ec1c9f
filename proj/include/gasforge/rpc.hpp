#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gasforge/chain.hpp"
#include "gasforge/errors.hpp"

namespace gasforge {

// JSON-RPC block acquisition over HTTP (eth_getBlockByNumber). Single-block
// fetches report errors as-is; range fetches retry transport failures with
// bounded exponential backoff and assemble results in block order no matter
// how the parallel fetches interleave.

struct RpcOptions {
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{500};
    unsigned parallelism = 4;
};

class RpcClient {
  public:
    explicit RpcClient(std::string endpoint, RpcOptions options = {})
        : endpoint_(std::move(endpoint)), options_(options) {
        if (options_.max_attempts < 1)
            throw ValidationError("max_attempts must be >= 1");
        if (options_.parallelism < 1)
            throw ValidationError("parallelism must be >= 1");
    }

    // One attempt, no retries. Throws TransportError on network problems,
    // NotFoundError when the node reports no such block, DecodeError on
    // malformed responses.
    BlockRecord fetch_block(std::uint64_t number) const {
        httplib::Client client(endpoint_);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(30, 0);
        char hex[20];
        std::snprintf(hex, sizeof hex, "0x%llx",
                      static_cast<unsigned long long>(number));
        const nlohmann::json request{{"jsonrpc", "2.0"},
                                     {"id", 1},
                                     {"method", "eth_getBlockByNumber"},
                                     {"params", {hex, false}}};
        const httplib::Result result =
            client.Post("/", request.dump(), "application/json");
        if (!result)
            throw TransportError("POST " + endpoint_ + " failed: " +
                                 httplib::to_string(result.error()));
        if (result->status != 200)
            throw TransportError("POST " + endpoint_ + " returned HTTP " +
                                 std::to_string(result->status));
        nlohmann::json response;
        try {
            response = nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError(std::string("malformed JSON-RPC response: ") + e.what());
        }
        if (response.contains("error") && !response["error"].is_null()) {
            const auto& err = response["error"];
            throw DecodeError("JSON-RPC error " +
                              (err.contains("code") ? err["code"].dump() : "?") + ": " +
                              err.value("message", std::string("unknown")));
        }
        if (!response.contains("result"))
            throw DecodeError("JSON-RPC response missing result");
        const auto& body = response["result"];
        if (body.is_null())
            throw NotFoundError("block " + std::to_string(number) + " not found");
        return decode_block(body, number);
    }

    // Inclusive range [start, end]. Each block is retried on transport
    // errors up to max_attempts with doubling backoff; a block that still
    // cannot be fetched aborts the range with the first missing number.
    BlockSequence fetch_range(std::uint64_t start, std::uint64_t end) const {
        if (end < start) throw ValidationError("range end precedes start");
        const std::uint64_t count = end - start + 1;
        std::vector<BlockRecord> slots(count);
        std::atomic<bool> any_failed{false};
        std::mutex fail_mutex;
        std::uint64_t first_failed = UINT64_MAX;
        std::string first_reason;
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (!any_failed.load(std::memory_order_relaxed)) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) break;
                const std::uint64_t number = start + i;
                try {
                    slots[i] = fetch_with_retry(number);
                } catch (const std::exception& e) {
                    any_failed.store(true, std::memory_order_relaxed);
                    std::lock_guard<std::mutex> lock(fail_mutex);
                    if (number < first_failed) {
                        first_failed = number;
                        first_reason = e.what();
                    }
                }
            }
        };
        const unsigned workers = static_cast<unsigned>(
            std::min<std::uint64_t>(options_.parallelism, count));
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (any_failed.load())
            throw PartialRangeError(first_failed,
                                    "block " + std::to_string(first_failed) +
                                        " unavailable after " +
                                        std::to_string(options_.max_attempts) +
                                        " attempts: " + first_reason);
        BlockSequence seq;
        seq.records = std::move(slots);
        require_valid_chain(seq);
        return seq;
    }

  private:
    BlockRecord fetch_with_retry(std::uint64_t number) const {
        std::chrono::milliseconds backoff = options_.initial_backoff;
        for (int attempt = 1;; ++attempt) {
            try {
                return fetch_block(number);
            } catch (const TransportError&) {
                if (attempt >= options_.max_attempts) throw;
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
    }

    static BlockRecord decode_block(const nlohmann::json& body, std::uint64_t number) {
        auto quantity = [&](const char* field) -> std::uint64_t {
            if (!body.contains(field) || !body[field].is_string())
                throw DecodeError("block " + std::to_string(number) +
                                  ": missing field '" + field + "'");
            return decode_quantity(body[field].get<std::string>());
        };
        BlockRecord b;
        b.block_number = quantity("number");
        if (b.block_number != number)
            throw DecodeError("requested block " + std::to_string(number) +
                              " but response carries " +
                              std::to_string(b.block_number));
        b.timestamp = static_cast<std::int64_t>(quantity("timestamp"));
        b.gas_limit = quantity("gasLimit");
        b.gas_used = quantity("gasUsed");
        b.base_fee = quantity("baseFeePerGas");
        validate_record(b);
        return b;
    }

    std::string endpoint_;
    RpcOptions options_;
};

}  // namespace gasforge
