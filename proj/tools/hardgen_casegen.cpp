// SPDX-License-Identifier: Apache-2.0
// hardgen-casegen: records the cassette of the zipcode/ticket case study.
//
// Every agent role answers from a fixed script; the exchanges are appended to
// the cassette named by the config, which then replays the run exactly.
#include "hardgen/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace
{

using namespace hardgen;

const char* const kToolMakerReply = R"({
  "advanced_tool_name": "buy_tickets_adv",
  "parameters": [
    {"name": "cityA", "type": "string", "description": "name of the departure city"},
    {"name": "cityB", "type": "string", "description": "name of the destination city"}
  ],
  "description": "Purchase air tickets between two cities by city names, returning the purchased ticket information."
})";

const char* const kQueryReply = "Query: Please purchase air tickets between the city Rivermist and the city Stonebrook.";

const char* const kDirectAttempt = R"(<think>
The user wants tickets between Rivermist and Stonebrook. buy_tickets sells tickets, so I will pass the two cities to it.
</think>
<tool_call>
[buy_tickets(cityA_zipcode="Rivermist", cityB_zipcode="Stonebrook")]
</tool_call>)";

const char* const kZipcodeStep = R"(<think>
buy_tickets expects a zipcode for each city, and the request names the cities only. get_zipcode maps a city name to its zipcode, so both lookups come first and can run together. The purchase follows once both zipcodes are known.
</think>
<tool_call>
[get_zipcode(city="Rivermist"), get_zipcode(city="Stonebrook")]
</tool_call>)";

const char* const kPurchaseStep = R"(<think>
The lookups returned 83214 for Rivermist and 74532 for Stonebrook. Both inputs of buy_tickets are now available.
</think>
<tool_call>
[buy_tickets(cityA_zipcode="83214", cityB_zipcode="74532")]
</tool_call>)";

const char* const kVerifierReply = R"({
  "error_type": "missing dependency",
  "error_location": "step 1, buy_tickets",
  "root_cause": "city names were passed where buy_tickets expects zipcodes",
  "corrective_hint": "buy_tickets takes zipcodes, but the request only provides city names. Work out which available tool yields the missing inputs and obtain them before purchasing.",
  "should_reconsider": ["which tool produces a zipcode", "whether the purchase can run yet"]
})";

std::string respond(const std::vector<ChatMessage>& messages)
{
    const auto& system = messages.front().content;
    if (starts_with(system, "You are a Tool Maker agent"))
        return kToolMakerReply;
    if (starts_with(system, "You are a Hard Query Generator agent"))
        return kQueryReply;
    if (starts_with(system, "You are a Verifier agent"))
        return kVerifierReply;
    if (starts_with(system, "You are a reasoning agent"))
    {
        std::size_t assistant = 0;
        bool refined = false;
        for (const auto& m: messages)
        {
            if (m.role == Role::Assistant)
            {
                ++assistant;
                refined = false;
            }
            if (m.role == Role::User && starts_with(m.content, "You are refining"))
                refined = true;
        }
        // The transcript gains one assistant message per verified step.
        if (assistant == 0)
            return refined ? kZipcodeStep : kDirectAttempt;
        return kPurchaseStep;
    }
    throw Error("case script has no reply for this role");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app {"Records the case-study cassette from a fixed agent script."};
    std::string config_path;
    app.add_option("-c,--config", config_path, "case-study config")->required()->check(CLI::ExistingFile);
    std::string output_dir;
    app.add_option("-o,--output-dir", output_dir, "where the recording run writes its outputs")->required();
    CLI11_PARSE(app, argc, argv);

    try
    {
        auto config = load_config(config_path, {{"output_dir", std::filesystem::absolute(output_dir).string()}});
        std::set<std::filesystem::path> cassettes;
        for (const auto* agent: {&config.tool_maker, &config.query_generator, &config.reasoner, &config.verifier})
            if (!agent->cassette.empty())
                cassettes.insert(agent->cassette);
        if (cassettes.size() != 1)
            throw ConfigError("the case-study config must name exactly one cassette");
        const auto cassette = *cassettes.begin();
        std::filesystem::remove(cassette);

        auto scripted = std::make_shared<ScriptedBackend>(
            [](const std::vector<ChatMessage>& messages, const CompletionParams&) { return respond(messages); });
        const auto recorder = record(scripted, cassette);
        Pipeline pipeline(config, nullptr, [&](const AgentConfig&, std::shared_ptr<const AnswerKey>) { return recorder; });
        const auto report = pipeline.run();
        std::cout << Json {{"cassette", cassette.string()}, {"exchanges", scripted->calls()}, {"report", report.to_json()}}
                         .dump(2)
                  << '\n';
        return report.refinement.retained == 1 ? 0 : 2;
    }
    catch (const ConfigError& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }
    catch (const std::exception& e)
    {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    }
}
