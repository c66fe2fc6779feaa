#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "bnnfi/fault.hpp"
#include "bnnfi/io.hpp"
#include "bnnfi/random.hpp"
#include "toy.hpp"

#ifndef BNNFI_CLI_PATH
#error "BNNFI_CLI_PATH must point at the CLI binary"
#endif

using namespace bnnfi;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(BNNFI_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string field(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
  }
  return {};
}

}  // namespace

TEST_CASE("plan on the reference model follows sample_size") {
  const auto r = run("plan --space persistent --confidence 0.99 --moe 0.01");
  REQUIRE(r.status == 0);
  const Model m = generate_model(NetworkTopology::reference(), 1);
  const auto big_n = enumerate_persistent_space(m).size();
  CHECK(field(r.out, "population") == std::to_string(big_n));
  CHECK(field(r.out, "sample_size") == std::to_string(sample_size(big_n, 0.99, 0.01)));
  CHECK(run("plan --space persistent --confidence 0.99 --moe 0.01").out == r.out);
}

TEST_CASE("infer agrees between the functional model and the simulator") {
  toy::TempDir dir;
  const auto model = (dir / "m.bnnw").string();
  REQUIRE(run("gen-model --out " + model + " --seed 5").status == 0);
  const auto r = run("infer --model " + model + " --seed 2 --index 3");
  REQUIRE(r.status == 0);
  CHECK(field(r.out, "golden_class") == field(r.out, "sim_class"));
  CHECK(field(r.out, "golden_scores") == field(r.out, "sim_scores"));
  CHECK(field(r.out, "match") == "yes");
  CHECK(run("infer --model " + model + " --seed 2 --index 3").out == r.out);
}

TEST_CASE("campaign and report end to end") {
  toy::TempDir dir;
  const auto model = (dir / "toy.bnnw").string();
  REQUIRE(run("gen-model --out " + model + " --seed 3 --topology 32,16,10 --pe 4,5 --simd 4,4").status == 0);
  {
    std::ofstream cfg(dir / "c.cfg");
    cfg << "mode = statistical\nspace = transient\nconfidence = 0.95\nmoe = 0.05\nseed = 4\nmodel = " << model
        << "\n";
  }
  const auto records = (dir / "r.jsonl").string();
  const auto c = run("campaign --config " + (dir / "c.cfg").string() + " --out " + records + " --workers 2");
  REQUIRE(c.status == 0);
  CHECK(field(c.out, "completed") == field(c.out, "planned"));

  for (const char* by : {"layer", "phase", "register"}) {
    for (const char* fmt : {"csv", "json", "plotdata"}) {
      const auto r = run(std::string("report --records ") + records + " --by " + by + " --format " + fmt);
      CHECK(r.status == 0);
      CHECK_FALSE(r.out.empty());
    }
  }
  const auto reg = run("report --records " + records + " --by register");
  CHECK(reg.out.find("L0.weight_addr") != std::string::npos);
  const auto out_csv = (dir / "layer.csv").string();
  CHECK(run("report --records " + records + " --by layer --out " + out_csv).status == 0);
  std::ifstream in(out_csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("scope,layer,injected", 0) == 0);
}

TEST_CASE("error exits") {
  toy::TempDir dir;
  { std::ofstream(dir / "empty.jsonl"); }
  CHECK(run("report --by layer --records " + (dir / "empty.jsonl").string()).status != 0);
  const auto bad = run("plan --bogus-flag");
  CHECK(bad.status != 0);
  CHECK(bad.out.find("Usage") != std::string::npos);
  CHECK(run("frobnicate").status != 0);
  CHECK(run("").status != 0);
  CHECK(run("infer --model " + (dir / "none.bnnw").string()).status != 0);
  CHECK(run("plan --confidence 0.5").status != 0);
  CHECK(run("registers --seed 1").status == 0);
}
