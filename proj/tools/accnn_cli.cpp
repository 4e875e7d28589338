// Command-line driver: gen-data, train, eval, attend, ablate.
//
// Every config key doubles as a flag (--train.lr=0.001); --config loads a
// key=value file first and later flags override it. Exit codes: 0 success,
// 2 config error, 3 numeric abort.

#include <iostream>
#include <string>
#include <vector>

#include "accnn/config.hpp"
#include "accnn/runner.hpp"
#include "accnn/train.hpp"

namespace {

void print_usage() {
  std::cout <<
      "usage: accnn <subcommand> [flags]\n"
      "\n"
      "subcommands:\n"
      "  gen-data   generate the synthetic shapes corpus under --out\n"
      "  train      train a detector; writes checkpoint.bin and train_log.jsonl\n"
      "  eval       evaluate a checkpoint; writes detections, metrics, error analysis\n"
      "  attend     export attention maps (CSV + PGM) for test images\n"
      "  ablate     train/evaluate the variant and scale-set grid; writes ablation.csv\n"
      "\n"
      "common flags:\n"
      "  --config FILE    key=value config file (flags override it)\n"
      "  --seed N         run.seed\n"
      "  --out DIR        run.out, where all artifacts land\n"
      "  --variant V      full | minus_G | minus_L | avg_global\n"
      "  --scales LIST    local.scales, e.g. 0.8,1.2,1.8\n"
      "  --iters N        train.iterations\n"
      "  --lr X           train.lr\n"
      "  --k-grid K       global.k\n"
      "  --t-steps T      global.t_steps\n"
      "  --ap-mode M      all-points | 11-point\n"
      "  --checkpoint F   run.checkpoint (eval/attend input)\n"
      "  --data DIR       data.corpus\n"
      "\n"
      "any config key works as a flag, e.g. --train.momentum=0.9\n";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
    print_usage();
    return args.empty() ? 2 : 0;
  }
  const std::string command = args[0];
  args.erase(args.begin());

  try {
    accnn::RunConfig cfg;
    cfg.apply_cli(args);
    if (command == "gen-data") {
      accnn::run_gen_data(cfg);
    } else if (command == "train") {
      accnn::run_train(cfg);
    } else if (command == "eval") {
      const auto out = accnn::run_eval(cfg);
      std::cout << "mAP " << out.map << " (" << out.metrics_path << ")\n";
    } else if (command == "attend") {
      accnn::run_attend(cfg);
    } else if (command == "ablate") {
      accnn::run_ablate(cfg);
    } else {
      std::cerr << "error: unknown subcommand '" << command << "'\n";
      print_usage();
      return 2;
    }
  } catch (const accnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const accnn::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
