#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "skillnet/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write train/dev/test JSONL splits for a synthetic string task"};
  std::string kind, out_dir;
  std::size_t train = 1000, dev = 100, test = 100;
  std::uint64_t seed = 0;
  skillnet::SyntheticOptions options;
  app.add_option("--kind", kind, "copy, reverse or rotate")->required();
  app.add_option("--out", out_dir, "Directory for train.jsonl, dev.jsonl and test.jsonl")->required();
  app.add_option("--train", train, "Training examples");
  app.add_option("--dev", dev, "Dev examples");
  app.add_option("--test", test, "Test examples");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--min-length", options.min_length, "Shortest source string");
  app.add_option("--max-length", options.max_length, "Longest source string");
  app.add_option("--alphabet", options.alphabet, "Characters to draw from");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    skillnet::save_jsonl((dir / "train.jsonl").string(), skillnet::synthetic_examples(kind, train, seed * 3 + 0, options));
    skillnet::save_jsonl((dir / "dev.jsonl").string(), skillnet::synthetic_examples(kind, dev, seed * 3 + 1, options));
    skillnet::save_jsonl((dir / "test.jsonl").string(), skillnet::synthetic_examples(kind, test, seed * 3 + 2, options));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
