#pragma once

#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>

namespace openseg::util {

/// Memoizing map where concurrent lookups of a missing key run the producer
/// exactly once; every other caller for that key waits on the same result.
/// Failed productions are not memoized, so a later call retries.
template <typename Key, typename Value>
class SingleFlightCache {
public:
    template <typename Producer>
    Value get_or_compute(const Key& key, Producer&& produce) {
        std::promise<Value> promise;
        std::shared_future<Value> future;
        bool owner = false;
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(key); it != entries_.end()) {
                future = it->second;
            } else {
                future = promise.get_future().share();
                entries_.emplace(key, future);
                owner = true;
            }
        }
        if (!owner) {
            return future.get();
        }
        try {
            Value value = std::invoke(std::forward<Producer>(produce));
            promise.set_value(value);
            return value;
        } catch (...) {
            {
                std::lock_guard lock(mutex_);
                entries_.erase(key);
            }
            promise.set_exception(std::current_exception());
            throw;
        }
    }

    std::optional<Value> peek(const Key& key) const {
        std::shared_future<Value> future;
        {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(key);
            if (it == entries_.end()) {
                return std::nullopt;
            }
            future = it->second;
        }
        return future.get();
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

private:
    mutable std::mutex mutex_;
    std::map<Key, std::shared_future<Value>> entries_;
};

} // namespace openseg::util
