#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecmkit/ecmkit.hpp"

using namespace ecmkit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("ecmkit_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const auto err_file = scratch() / "stderr.txt";
  const std::string cmd = std::string("'") + ECMKIT_CLI + "' " + args + " 2>'" + err_file.string() + "'";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream e(err_file);
  r.err.assign(std::istreambuf_iterator<char>(e), {});
  return r;
}

std::string write_file(const std::string& name, const std::string& text) {
  const auto path = scratch() / name;
  std::ofstream(path) << text;
  return path.string();
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace

TEST(Cli, ModelShowJsonMatchesLibrary) {
  const auto r = run("model show bdw --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_machine(r.out), resolve_machine("bdw"));
  const auto t = run("-m hsw model show");
  ASSERT_EQ(t.code, 0);
  EXPECT_NE(t.out.find("HSW"), std::string::npos);
}

TEST(Cli, ModelValidate) {
  const std::string dir = ECMKIT_MACHINE_DIR;
  const auto ok = run("model validate " + dir + "/snb.json " + dir + "/bdw.json");
  EXPECT_EQ(ok.code, 0) << ok.err;

  auto doc = json::parse(read_text_file(dir + "/bdw.json"));
  doc["cores"] = 0;
  const auto bad = run("model validate " + write_file("bad.json", doc.dump()));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("cores"), std::string::npos);

  doc = json::parse(read_text_file(dir + "/bdw.json"));
  doc["vendor_notes"] = "x";
  const auto extra = write_file("extra.json", doc.dump());
  EXPECT_EQ(run("model validate " + extra).code, 2);
  EXPECT_EQ(run("--lenient model validate " + extra).code, 0);
  EXPECT_EQ(run("model validate " + write_file("broken.json", "{")).code, 2);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("-m bdw predict triad --policy sideways").code, 2);
  EXPECT_EQ(run("-m bdw predict triad --ws lots").code, 2);
  EXPECT_EQ(run("-m bdw probe bw triad 16kB 1 --jitter 0.5").code, 2);
}

TEST(Cli, UnknownMachineIsNotAValidationError) {
  const auto r = run("-m zen4 predict triad");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("zen4"), std::string::npos);
}

TEST(Cli, PredictOutputs) {
  const auto j = run("-m snb predict triad --json");
  ASSERT_EQ(j.code, 0) << j.err;
  EXPECT_DOUBLE_EQ(json::parse(j.out).at("predicted_bandwidth_bytes_per_cycle").get<double>(), 48.0);

  const auto n = run("-m bdw predict triad --ws 1GB --ecm-notation");
  ASSERT_EQ(n.code, 0);
  EXPECT_EQ(n.out, "{1.06 || 1.50 | 4.00 | 4.00 | 4.75} cy/it\n");

  const auto c = run("-m hsw predict dot --ws 100kB --csv");
  ASSERT_EQ(c.code, 0);
  EXPECT_EQ(std::count(c.out.begin(), c.out.end(), '\n'), 2);

  const auto kfile = write_file("dot.json", kernel_to_json(builtin_kernel("dot", Width::avx)).dump());
  const auto f = run("-m hsw predict --kernel-file " + kfile + " --ws 100kB --json");
  ASSERT_EQ(f.code, 0) << f.err;
  const auto b = run("-m hsw predict dot --ws 100kB --json");
  EXPECT_EQ(json::parse(f.out), json::parse(b.out));
}

TEST(Cli, KernelListAndExport) {
  const auto l = run("kernel list");
  ASSERT_EQ(l.code, 0);
  for (const auto& n : builtin_kernel_names()) EXPECT_NE(l.out.find(n), std::string::npos);
  const auto e = run("kernel export daxpy --width sse");
  ASSERT_EQ(e.code, 0);
  EXPECT_EQ(kernel_from_json(json::parse(e.out)), builtin_kernel("daxpy", Width::sse));
}

TEST(Cli, SyntheticProbes) {
  const auto lat = run("-m bdw --cod off probe latency 10kB");
  ASSERT_EQ(lat.code, 0) << lat.err;
  const auto r = probe::result_from_json(json::parse(lat.out));
  EXPECT_DOUBLE_EQ(r.value, 4.0);
  EXPECT_EQ(r.repetitions.size(), 21u);

  const auto dir = run("-m bdw --snoop DIR probe latency 1GB");
  EXPECT_DOUBLE_EQ(probe::result_from_json(json::parse(dir.out)).value, 178.0);

  const auto inst = run("-m bdw probe inst div --mode latency");
  EXPECT_DOUBLE_EQ(probe::result_from_json(json::parse(inst.out)).value, 24.0);

  const auto g = run("-m hsw probe gather Mem 8 --csv");
  ASSERT_EQ(g.code, 0);
  EXPECT_EQ(g.out.substr(0, g.out.find('\n')), probe::probe_csv_header());

  const auto reps = run("-m bdw --repetitions 8 probe latency 10kB");
  EXPECT_EQ(reps.code, 2);
}

TEST(Cli, CapabilityErrorsExitThree) {
  const auto g = run("--executor real probe gather L1 1");
  EXPECT_EQ(g.code, 3);
  EXPECT_NE(g.err.find("real"), std::string::npos);
  EXPECT_EQ(run("-m bdw sweep --command true").code, 3);
}

TEST(Cli, ReportCompareExitCodes) {
  const auto l2 = run("-m bdw probe l2 dot 128kB");
  ASSERT_EQ(l2.code, 0) << l2.err;
  const auto good = write_file("l2.jsonl", l2.out);
  const auto ok = run("report compare " + good);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);

  auto doc = json::parse(l2.out);
  doc["value"] = doc["value"].get<double>() * 1.5;
  const auto bad = write_file("l2_bad.jsonl", doc.dump() + "\n");
  const auto fail = run("report compare " + bad);
  EXPECT_EQ(fail.code, 4);
  EXPECT_NE(fail.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run("report compare --tolerance 0.6 " + bad).code, 0);

  const auto lat = write_file("lat.jsonl", run("-m bdw probe latency 10kB").out);
  EXPECT_NE(run("report compare " + lat).code, 0);
}

TEST(Cli, ReportEfficiencyFromProbes) {
  std::string lines;
  for (int n : {1, 2, 4, 8, 14}) lines += run("-m hsw --cod off probe bw dot 8MB " + std::to_string(n)).out;
  const auto file = write_file("bw.jsonl", lines);
  const auto r = run("report efficiency " + file + " --json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(json::parse(r.out).at("parallel_efficiency").get<double>(), 0.92, 0.005);
}

TEST(Cli, SweepAndEnergyReport) {
  const auto s = run("-m hsw sweep --profile hpcg_like --uncore-freqs 1.2GHz:2.8GHz:0.4GHz --cores 14");
  ASSERT_EQ(s.code, 0) << s.err;
  const auto sweep = probe::sweep_from_json(json::parse(s.out));
  EXPECT_EQ(sweep.points.size(), 5u);
  const auto file = write_file("sweep.json", s.out);
  const auto e = run("report energy " + file + " --json");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto rows = json_lines(e.out);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& p = sweep.points[i];
    EXPECT_NEAR(rows[i].at("efficiency").get<double>(), p.performance / (*p.package_energy_joules / p.duration_s),
                1e-9);
  }
  const auto csv = run("-m hsw sweep --profile hpcg_like --cores 1:3 --csv");
  EXPECT_EQ(std::count(csv.out.begin(), csv.out.end(), '\n'), 4);
}

TEST(Cli, OutputFile) {
  const auto path = (scratch() / "out.json").string();
  ASSERT_EQ(run("-m ivb predict copy --json -o " + path).code, 0);
  EXPECT_EQ(json::parse(read_text_file(path)).at("machine"), "IVB");
}
