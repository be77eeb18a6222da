#include "d2q/replay.hpp"

#include <algorithm>
#include <sstream>

#include "d2q/error.hpp"

namespace d2q::replay {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
    if (t.state.size() != t.next_state.size())
        throw ContractError("replay push: state and next_state differ in length");
    if (size_ == 0 && states_.empty()) {
        if (t.state.empty() || t.action.empty())
            throw ContractError("replay push: empty state or action");
        state_dim_ = t.state.size();
        action_dim_ = t.action.size();
        // Grow lazily; reserving 1e6 slots up front would be wasteful for short runs.
    } else if (t.state.size() != state_dim_ || t.action.size() != action_dim_) {
        std::ostringstream msg;
        msg << "replay push: transition widths (" << t.state.size() << ", " << t.action.size()
            << ") differ from buffer widths (" << state_dim_ << ", " << action_dim_ << ")";
        throw ContractError(msg.str());
    }
    if (rewards_.size() < capacity_) {
        states_.insert(states_.end(), t.state.begin(), t.state.end());
        actions_.insert(actions_.end(), t.action.begin(), t.action.end());
        rewards_.push_back(t.reward);
        dones_.push_back(t.done ? 1 : 0);
        next_states_.insert(next_states_.end(), t.next_state.begin(), t.next_state.end());
    } else {
        std::copy(t.state.begin(), t.state.end(), states_.begin() + cursor_ * state_dim_);
        std::copy(t.action.begin(), t.action.end(), actions_.begin() + cursor_ * action_dim_);
        rewards_[cursor_] = t.reward;
        dones_[cursor_] = t.done ? 1 : 0;
        std::copy(t.next_state.begin(), t.next_state.end(), next_states_.begin() + cursor_ * state_dim_);
    }
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::load(std::size_t slot) const {
    Transition t;
    t.state.assign(states_.begin() + slot * state_dim_, states_.begin() + (slot + 1) * state_dim_);
    t.action.assign(actions_.begin() + slot * action_dim_, actions_.begin() + (slot + 1) * action_dim_);
    t.reward = rewards_[slot];
    t.done = dones_[slot] != 0;
    t.next_state.assign(next_states_.begin() + slot * state_dim_,
                        next_states_.begin() + (slot + 1) * state_dim_);
    return t;
}

Transition ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw PreconditionError("replay at: index out of range");
    const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
    return load((oldest + i) % capacity_);
}

std::vector<std::size_t> ReplayBuffer::draw_indices(std::size_t batch_size, Rng& rng) const {
    if (size_ == 0) throw PreconditionError("replay sample: buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(batch_size);
    for (std::size_t slot : draw_indices(batch_size, rng)) out.push_back(load(slot));
    return out;
}

Batch ReplayBuffer::sample_batch(std::size_t batch_size, Rng& rng) const {
    const auto idx = draw_indices(batch_size, rng);
    Batch b;
    b.states.resize(batch_size, state_dim_);
    b.actions.resize(batch_size, action_dim_);
    b.next_states.resize(batch_size, state_dim_);
    b.rewards.resize(batch_size);
    b.dones.resize(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        const std::size_t slot = idx[k];
        std::copy_n(states_.begin() + slot * state_dim_, state_dim_, b.states.row(k).begin());
        std::copy_n(actions_.begin() + slot * action_dim_, action_dim_, b.actions.row(k).begin());
        std::copy_n(next_states_.begin() + slot * state_dim_, state_dim_, b.next_states.row(k).begin());
        b.rewards[k] = rewards_[slot];
        b.dones[k] = dones_[slot] != 0 ? 1.0 : 0.0;
    }
    return b;
}

}  // namespace d2q::replay
