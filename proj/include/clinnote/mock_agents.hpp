#pragma once

#include <string>
#include <vector>

#include "clinnote/gateway.hpp"

// Heuristic stand-ins for the LLM agents, used by --mock runs and tests.
// Each responder reads the same user content the real model would see and
// answers in the format the corresponding prompt asks for. Extraction has
// no responder: extraction replies must come from a transcript.
namespace clinnote::mock {

// Category labels used by the scheme responder for a variable
// (extractor field name, e.g. "housing"). Unknown variables get a generic
// two-level scheme.
std::vector<std::string> scheme_labels(const std::string& variable);

// Stemmed content tokens: lowercased, stop words dropped, a few clinical
// abbreviations expanded, suffix stripped, first four letters kept.
std::vector<std::string> stems(const std::string& text);
double token_similarity(const std::string& a, const std::string& b);

std::string scheme_reply(const std::string& user_content);
std::string label_reply(const std::string& user_content);
std::string judge_reply(const std::string& user_content);
std::string overall_summary_reply(const std::string& note);
std::string no_number_summary_reply(const std::string& user_content);

void install_responders(llm::MockBackend& backend);

}  // namespace clinnote::mock
