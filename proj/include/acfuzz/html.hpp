#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace acfuzz::html {

struct Anchor {
  std::string href;
  std::string text;
};

struct FormField {
  std::string tag;   // input, select, textarea, button
  std::string type;  // lowercase input type; "text" when absent
  std::string name;
  std::string value;
  std::vector<std::string> options;  // select option values in document order
  bool checked = false;
};

struct Form {
  std::string action;
  std::string method = "get";
  std::vector<FormField> fields;
};

struct Document {
  std::vector<Anchor> anchors;
  std::vector<Form> forms;
};

// Tolerant static scan of anchors and forms. Script and style bodies are
// skipped; nothing is executed.
Document parse(std::string_view markup);

std::string decode_entities(std::string_view s);

}  // namespace acfuzz::html
