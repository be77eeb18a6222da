#pragma once

#include <cstddef>
#include <vector>

#include "d2q/matrix.hpp"
#include "d2q/random.hpp"

namespace d2q::replay {

struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    bool done = false;
    std::vector<double> next_state;

    bool operator==(const Transition&) const = default;
};

// Column-stacked minibatch, one row per transition.
struct Batch {
    Matrix states;
    Matrix actions;
    std::vector<double> rewards;
    std::vector<double> dones;  // 1.0 for terminal transitions
    Matrix next_states;

    std::size_t size() const { return rewards.size(); }
};

// Fixed-capacity FIFO ring with uniform sampling (with replacement).
// Transition widths are fixed by the first push.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    // Throws ContractError if widths differ from the first transition's.
    void push(const Transition& t);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return size_ == 0; }

    // i = 0 is the oldest stored transition.
    Transition at(std::size_t i) const;

    // Throws PreconditionError on an empty buffer.
    std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const;
    Batch sample_batch(std::size_t batch_size, Rng& rng) const;

private:
    std::vector<std::size_t> draw_indices(std::size_t batch_size, Rng& rng) const;
    Transition load(std::size_t slot) const;

    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t cursor_ = 0;  // next slot to write
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    std::vector<double> states_;
    std::vector<double> actions_;
    std::vector<double> rewards_;
    std::vector<unsigned char> dones_;
    std::vector<double> next_states_;
};

}  // namespace d2q::replay
