// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hardgen/llm_gateway.hpp"
#include "hardgen/sim_env.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace hardgen
{

/// Ground-truth answers for simulated agents, keyed by the user queries of a
/// conversation (one per turn). Each entry is a list of steps; each step is
/// the calls of one tool_call block.
class AnswerKey
{
  public:
    using Steps = std::vector<std::vector<Call>>;

    /// `responses[i]`, when given, is the tool message body that follows step i.
    void add(std::vector<std::string> queries, Steps steps, std::vector<std::string> responses = {});

    /// Candidates whose queries start with `queries`, whose first steps equal
    /// `done` and whose recorded responses start with `seen`, in insertion order.
    [[nodiscard]] std::vector<Steps> lookup(const std::vector<std::string>& queries, const Steps& done,
                                            const std::vector<std::string>& seen = {}) const;

  private:
    struct Entry
    {
        std::vector<std::string> queries;
        Steps steps;
        std::vector<std::string> responses;
    };

    mutable std::mutex _mutex;
    std::map<std::string, std::vector<Entry>> _entries; // by first query
};

struct SimulatedAgentOptions
{
    std::string name = "simulated";
    std::uint64_t seed = 0;
    double first_attempt_accuracy = 0.7; // reasoner, before any refinement in the step
    double refined_accuracy = 1.0;       // reasoner, after at least one refinement
    double accuracy = 0.5;               // self-eval model, per call
};

/// Deterministic stand-in for all agent roles. The role is read from the
/// opening line of the system prompt; every decision is a hash of the seed
/// and the transcript, so replies never depend on call order or threads.
class SimulatedAgent: public LlmBackend
{
  public:
    SimulatedAgent(std::shared_ptr<const AnswerKey> key, SimulatedAgentOptions options);

    std::string complete(const std::vector<ChatMessage>& messages, const CompletionParams& params) override;

  private:
    std::string tool_maker(const std::vector<ChatMessage>& messages) const;
    std::string query_generator(const std::vector<ChatMessage>& messages) const;
    std::string reasoner(const std::vector<ChatMessage>& messages) const;
    std::string verifier(const std::vector<ChatMessage>& messages) const;
    std::string self_eval(const std::vector<ChatMessage>& messages) const;

    [[nodiscard]] double draw(const std::vector<ChatMessage>& messages, std::string_view salt) const;

    std::shared_ptr<const AnswerKey> _key;
    SimulatedAgentOptions _options;
};

} // namespace hardgen
