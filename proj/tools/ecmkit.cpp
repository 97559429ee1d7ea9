#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecmkit/ecmkit.hpp"

using namespace ecmkit;
using probe::ProbeResult;

namespace {

struct Globals {
  std::string machine;
  std::string executor = "synthetic";
  std::uint64_t seed = 0;
  double jitter = 0.0;
  int repetitions = 21;
  std::string snoop;
  std::string cod;
  bool json = false;
  bool csv = false;
  bool lenient = false;
  std::string output;
};

enum class Format { text, json, csv };

Format format_of(const Globals& g, Format fallback) {
  if (g.json && g.csv) throw precondition_error("--json and --csv are mutually exclusive");
  if (g.json) return Format::json;
  if (g.csv) return Format::csv;
  return fallback;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorKind::runtime, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

MachineDescription load_selected_machine(const Globals& g, const std::string& name = {}) {
  const auto& which = name.empty() ? g.machine : name;
  if (which.empty()) throw precondition_error("no machine selected (use --machine)");
  return resolve_machine(which, LoadOptions{g.lenient});
}

std::optional<bool> parse_cod(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw precondition_error("--cod takes on or off");
}

ChipConfig chip_config(const Globals& g, const MachineDescription& md) {
  std::optional<SnoopMode> mode;
  if (!g.snoop.empty()) {
    mode = parse_snoop_mode(g.snoop);
    if (!mode) throw precondition_error("unknown snoop mode '" + g.snoop + "' (ES, HS, HS+OSB, DIR)");
  }
  return resolve_config(md, mode, parse_cod(g.cod));
}

Width width_arg(const std::string& s) {
  auto w = parse_width(s);
  if (!w) throw precondition_error("unknown width '" + s + "' (scalar, sse, avx)");
  return *w;
}

KernelDescriptor kernel_arg(const Globals& g, const MachineDescription& md, const std::string& name,
                            const std::string& width, const std::string& file) {
  if (!file.empty()) return kernel_from_json(parse_json_text(read_text_file(file), file), g.lenient);
  return builtin_kernel_for(md, name, width_arg(width));
}

std::unique_ptr<probe::Executor> make_executor(const Globals& g) {
  if (g.executor == "real") return std::make_unique<probe::RealExecutor>();
  if (g.executor != "synthetic") throw precondition_error("--executor takes real or synthetic");
  auto md = load_selected_machine(g);
  probe::SyntheticConfig cfg;
  cfg.chip = chip_config(g, md);
  cfg.noise = probe::NoiseModel{g.jitter, g.seed};
  return std::make_unique<probe::SyntheticExecutor>(std::move(md), cfg);
}

// "turbo"/"auto" leave the axis to the platform; "a:b:step" is an inclusive range.
std::vector<std::optional<double>> frequency_axis(const std::string& spec) {
  std::vector<std::optional<double>> out;
  if (spec.empty() || spec == "turbo" || spec == "auto") return {std::nullopt};
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw precondition_error("frequency range must be start:stop:step");
    const double a = parse_frequency(parts[0]), b = parse_frequency(parts[1]), step = parse_frequency(parts[2]);
    if (!(step > 0) || b < a) throw precondition_error("bad frequency range '" + spec + "'");
    const int n = static_cast<int>(std::floor((b - a) / step + 1e-6));
    for (int i = 0; i <= n; ++i) out.emplace_back(a + i * step);
    return out;
  }
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ',');) out.emplace_back(parse_frequency(p));
  return out;
}

std::vector<int> core_axis(const std::string& spec) {
  std::vector<int> out;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    const int a = std::stoi(spec.substr(0, colon)), b = std::stoi(spec.substr(colon + 1));
    if (a < 1 || b < a) throw precondition_error("bad core range '" + spec + "'");
    for (int n = a; n <= b; ++n) out.push_back(n);
    return out;
  }
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(std::stoi(p));
  return out;
}

std::vector<json> read_json_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<json> docs;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    docs.push_back(parse_json_text(line, path + ":" + std::to_string(line_no)));
  }
  if (docs.empty()) throw precondition_error(path + " holds no results");
  return docs;
}

void emit_probe(const Globals& g, const ProbeResult& r) {
  Output out(g.output);
  if (format_of(g, Format::json) == Format::csv) {
    out.stream() << probe::probe_csv_header() << '\n' << probe::result_to_csv_row(r) << '\n';
  } else {
    out.stream() << probe::result_to_json(r).dump() << '\n';
  }
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void show_machine_text(std::ostream& os, const MachineDescription& md) {
  os << md.name;
  if (!md.chip.model.empty()) os << "  " << md.chip.model;
  if (!md.chip.microarchitecture.empty()) os << "  (" << md.chip.microarchitecture << ")";
  os << "\ncores " << md.cores << ", NUMA domains " << md.numa_domains_per_chip << ", TDP " << md.frequency.tdp_watts
     << " W\n";
  auto ghz = [](const std::optional<double>& v) { return v ? fmt(*v * 1e-9, 2) + " GHz" : std::string("-"); };
  os << "clock: base " << ghz(md.frequency.base_hz) << ", all-core turbo " << ghz(md.frequency.max_all_core_turbo_hz)
     << ", AVX base " << ghz(md.frequency.avx_base_hz) << ", AVX all-core turbo "
     << ghz(md.frequency.avx_all_core_turbo_hz) << ", uncore " << ghz(md.frequency.uncore_min_hz) << " - "
     << ghz(md.frequency.uncore_max_hz) << "\n";
  os << "caches:\n";
  for (const auto& c : md.cache_levels) {
    os << "  " << c.level_name << "  " << c.capacity_bytes / 1024 << " kB" << (c.per_core ? " per core" : " shared");
    if (c.inter_level_bytes_per_cycle) os << ", " << fmt(*c.inter_level_bytes_per_cycle, 0) << " B/cy to next";
    for (const auto& [tag, v] : c.latency_cycles) os << ", latency[" << tag << "] " << fmt(v, 0);
    os << "\n";
  }
  os << "memory: " << md.memory.channels << "ch " << md.memory.technology << ", theoretical "
     << fmt(md.memory.theoretical_bw_bytes_per_s * 1e-9, 1) << " GB/s";
  for (const auto& [pattern, bw] : md.memory.sustained_bw_bytes_per_s) os << ", " << pattern << " " << fmt(bw * 1e-9, 1) << " GB/s";
  os << "\ninstructions (latency / inverse throughput, cy):\n";
  for (const auto& i : md.instruction_table) {
    os << "  " << i.mnemonic << " " << to_string(i.width) << " " << to_string(i.precision) << "  "
       << fmt(i.latency_cycles, 2) << " / " << fmt(i.inverse_throughput_cycles, 2) << "\n";
  }
  if (md.gather_table) {
    os << "gather (cy/instruction by lines touched 1/2/4/8):\n";
    for (const auto& [level, row] : md.gather_table->cycles) {
      os << "  " << level;
      for (const auto& [spread, v] : row) os << "  " << fmt(v, 1);
      os << "\n";
    }
  }
  for (const auto& [mode, p] : md.snoop_profiles) {
    os << "snoop " << to_string(mode) << ": L3 " << fmt(p.l3_latency_cycles, 0) << " cy, memory "
       << fmt(p.memory_latency_cycles, 0) << " cy\n";
  }
}

void show_prediction_text(std::ostream& os, const EcmPrediction& e) {
  os << e.kernel << " on " << e.machine << ", working set " << e.working_set_bytes << " B, policy "
     << to_string(e.overlap_policy) << "\n";
  os << "  " << ecm_notation(e) << "\n";
  os << "  in-core: throughput " << fmt(e.in_core.t_throughput) << " cy, critical path " << fmt(e.in_core.t_critical_path)
     << " cy, AGU " << fmt(e.in_core.t_agu) << " cy, retire " << fmt(e.in_core.t_retire) << " cy\n";
  os << "  composed " << fmt(e.composed_cycles_per_iteration) << " cy/it, " << fmt(e.data_bytes_per_iteration, 0)
     << " B/it at " << e.data_link << "\n";
  os << "  bandwidth " << fmt(e.predicted_bandwidth_bytes_per_cycle) << " B/cy = "
     << fmt(e.predicted_bandwidth_bytes_per_s * 1e-9) << " GB/s at " << fmt(e.frequency_hz * 1e-9) << " GHz\n";
  if (is_memory_bound_prediction(e)) os << "  saturates at " << e.n_saturation << " cores\n";
  if (e.transfers.memory_bandwidth_fallback) {
    os << "  warning: no sustained bandwidth for pattern '" << e.access_pattern << "', theoretical value used\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECM model predictions, microbenchmark probes and reports", "ecmkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-m,--machine", g.machine, "Machine name (snb, ivb, hsw, bdw) or path to a machine file");
  app.add_option("--executor", g.executor, "Probe executor: real or synthetic")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for synthetic noise")->capture_default_str();
  app.add_option("--jitter", g.jitter, "Relative jitter of synthetic measurements, 0 to 0.2")->capture_default_str();
  app.add_option("--repetitions", g.repetitions, "Measured repetitions per probe (>= 9)")->capture_default_str();
  app.add_option("--snoop", g.snoop, "Snoop mode: ES, HS, HS+OSB or DIR");
  app.add_option("--cod", g.cod, "Cluster-on-die: on or off");
  app.add_flag("--json", g.json, "Emit JSON");
  app.add_flag("--csv", g.csv, "Emit CSV");
  app.add_flag("--lenient", g.lenient, "Ignore unknown keys in input documents");
  app.add_option("-o,--output", g.output, "Write results to a file instead of stdout");
  app.fallthrough();

  // model
  auto* model = app.add_subcommand("model", "Validate or display machine descriptions");
  model->require_subcommand(1);
  std::vector<std::string> validate_files;
  auto* model_validate = model->add_subcommand("validate", "Check machine files against the schema and invariants");
  model_validate->add_option("files", validate_files, "Machine files")->required();
  std::string show_name;
  auto* model_show = model->add_subcommand("show", "Print a machine description");
  model_show->add_option("machine", show_name, "Machine name or file (defaults to --machine)");

  // kernel
  auto* kernel = app.add_subcommand("kernel", "List or export builtin kernels");
  kernel->require_subcommand(1);
  auto* kernel_list = kernel->add_subcommand("list", "List builtin kernel names");
  std::string export_name, export_width = "avx";
  auto* kernel_export = kernel->add_subcommand("export", "Print a builtin kernel as JSON");
  kernel_export->add_option("name", export_name, "Kernel name")->required();
  kernel_export->add_option("--width", export_width, "scalar, sse or avx")->capture_default_str();

  // predict
  std::string pk_name, pk_ws = "16kB", pk_width = "avx", pk_policy = "none", pk_freq, pk_file;
  int pk_cores = 1, pk_unroll = 2;
  bool pk_no_derate = false, pk_notation = false;
  auto* predict_cmd = app.add_subcommand("predict", "ECM prediction for a kernel on a machine");
  predict_cmd->add_option("kernel", pk_name, "Builtin kernel name");
  predict_cmd->add_option("--kernel-file", pk_file, "Kernel descriptor JSON instead of a builtin");
  predict_cmd->add_option("--ws", pk_ws, "Working set, total over cores (e.g. 16kB, 10MB, 1GB)")->capture_default_str();
  predict_cmd->add_option("--width", pk_width, "SIMD width of builtin kernels")->capture_default_str();
  predict_cmd->add_option("--policy", pk_policy, "Overlap policy: none or full")->capture_default_str();
  predict_cmd->add_option("--freq", pk_freq, "Core clock for cycle conversion (default: base)");
  predict_cmd->add_option("--cores", pk_cores, "Cores sharing the working set")->capture_default_str();
  predict_cmd->add_option("--unroll", pk_unroll, "Unroll depth of the critical-path estimate")->capture_default_str();
  predict_cmd->add_flag("--no-derate", pk_no_derate, "Use theoretical inter-level bandwidths");
  predict_cmd->add_flag("--ecm-notation", pk_notation, "Print only the ECM shorthand");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Run a microbenchmark probe");
  probe_cmd->require_subcommand(1);
  std::string pl_ws;
  auto* probe_latency = probe_cmd->add_subcommand("latency", "Pointer-chase load latency");
  probe_latency->add_option("ws", pl_ws, "Buffer size")->required();
  std::string pi_mnemonic, pi_width = "avx", pi_precision = "dp", pi_mode = "throughput";
  int pi_chains = probe::default_throughput_chains;
  auto* probe_inst = probe_cmd->add_subcommand("inst", "Instruction latency or inverse throughput");
  probe_inst->add_option("mnemonic", pi_mnemonic, "Instruction mnemonic")->required();
  probe_inst->add_option("--width", pi_width)->capture_default_str();
  probe_inst->add_option("--precision", pi_precision)->capture_default_str();
  probe_inst->add_option("--mode", pi_mode, "latency or throughput")->capture_default_str();
  probe_inst->add_option("--chains", pi_chains, "Independent chains in throughput mode")->capture_default_str();
  std::string pb_kernel, pb_ws, pb_width = "avx", pb_file;
  int pb_cores = 1;
  auto* probe_bw = probe_cmd->add_subcommand("bw", "Streaming kernel bandwidth");
  probe_bw->add_option("kernel", pb_kernel, "Builtin kernel name")->required();
  probe_bw->add_option("ws", pb_ws, "Working set, total over cores")->required();
  probe_bw->add_option("cores", pb_cores, "Cores")->capture_default_str();
  probe_bw->add_option("--width", pb_width)->capture_default_str();
  std::string p2_kernel, p2_ws, p2_width = "avx";
  auto* probe_l2 = probe_cmd->add_subcommand("l2", "L2 bandwidth from cycle and load-retirement counts");
  probe_l2->add_option("kernel", p2_kernel, "Builtin kernel name")->required();
  probe_l2->add_option("ws", p2_ws, "L2-resident working set")->required();
  probe_l2->add_option("--width", p2_width)->capture_default_str();
  std::string pg_level;
  int pg_spread = 1;
  auto* probe_gather = probe_cmd->add_subcommand("gather", "Gather instruction cost");
  probe_gather->add_option("level", pg_level, "Source level: L1, L2, L3 or Mem")->required();
  probe_gather->add_option("spread", pg_spread, "Distinct cache lines touched: 1, 2, 4 or 8")->required();

  // sweep
  std::string sw_profile, sw_kernel, sw_ws = "1GB", sw_width = "avx", sw_command, sw_core = "turbo",
                                      sw_uncore = "auto", sw_cores = "1";
  double sw_dwell = 1.0;
  auto* sweep = app.add_subcommand("sweep", "Frequency and core-count sweep with energy");
  sweep->add_option("--profile", sw_profile, "Workload profile: linpack_like or hpcg_like");
  sweep->add_option("--kernel", sw_kernel, "Builtin kernel as workload");
  sweep->add_option("--ws", sw_ws, "Kernel working set")->capture_default_str();
  sweep->add_option("--width", sw_width)->capture_default_str();
  sweep->add_option("--command", sw_command, "External command as workload (real executor)");
  sweep->add_option("--core-freqs", sw_core, "turbo, a list, or start:stop:step; bare numbers are Hz (1.2GHz:2.8GHz:0.1GHz)")->capture_default_str();
  sweep->add_option("--uncore-freqs", sw_uncore, "auto, a list, or start:stop:step; bare numbers are Hz")->capture_default_str();
  sweep->add_option("--cores", sw_cores, "Core counts: list or a:b")->capture_default_str();
  sweep->add_option("--dwell", sw_dwell, "Seconds per point")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Analyse probe and sweep results");
  report->require_subcommand(1);
  std::string re_file;
  double re_epsilon = 0.02;
  auto* report_eff = report->add_subcommand("efficiency", "Parallel efficiency and saturation of bandwidth probes");
  report_eff->add_option("file", re_file, "JSON lines from probe bw")->required();
  report_eff->add_option("--epsilon", re_epsilon, "Saturation threshold")->capture_default_str();
  std::string rn_file;
  auto* report_energy = report->add_subcommand("energy", "Performance per watt of sweep points");
  report_energy->add_option("file", rn_file, "JSON from sweep")->required();
  std::string rc_file, rc_policy = "none";
  double rc_tolerance = 0.05;
  bool rc_no_derate = false;
  auto* report_compare = report->add_subcommand("compare", "Measured bandwidth versus ECM prediction");
  report_compare->add_option("file", rc_file, "JSON lines from probe bw or probe l2")->required();
  report_compare->add_option("--tolerance", rc_tolerance, "Relative tolerance")->capture_default_str();
  report_compare->add_option("--policy", rc_policy)->capture_default_str();
  report_compare->add_flag("--no-derate", rc_no_derate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    probe::ProbeSettings settings{g.repetitions};

    if (model_validate->parsed()) {
      int bad = 0;
      for (const auto& f : validate_files) {
        try {
          const auto md = load_machine_file(f, LoadOptions{g.lenient});
          std::cout << f << ": ok (" << md.name << ")\n";
        } catch (const Error& e) {
          std::cerr << f << ": " << e.what() << "\n";
          bad = bad ? bad : exit_code_for(e.kind());
        }
      }
      return bad;
    }
    if (model_show->parsed()) {
      const auto md = load_selected_machine(g, show_name);
      Output out(g.output);
      if (format_of(g, Format::text) == Format::json) {
        out.stream() << machine_to_json(md).dump(2) << '\n';
      } else {
        show_machine_text(out.stream(), md);
      }
      return 0;
    }
    if (kernel_list->parsed()) {
      for (const auto& n : builtin_kernel_names()) std::cout << n << '\n';
      return 0;
    }
    if (kernel_export->parsed()) {
      const auto k = g.machine.empty() ? builtin_kernel(export_name, width_arg(export_width))
                                       : builtin_kernel_for(load_selected_machine(g), export_name, width_arg(export_width));
      Output out(g.output);
      out.stream() << kernel_to_json(k).dump(2) << '\n';
      return 0;
    }
    if (predict_cmd->parsed()) {
      if (pk_name.empty() == pk_file.empty()) throw precondition_error("give a kernel name or --kernel-file");
      const auto md = load_selected_machine(g);
      const auto k = kernel_arg(g, md, pk_name, pk_width, pk_file);
      PredictOptions po;
      const auto policy = parse_overlap_policy(pk_policy);
      if (!policy) throw precondition_error("--policy takes none or full");
      po.policy = *policy;
      po.config = chip_config(g, md);
      if (!pk_freq.empty()) po.frequency_hz = parse_frequency(pk_freq);
      po.apply_derate = !pk_no_derate;
      po.unroll_depth = pk_unroll;
      po.cores = pk_cores;
      const auto e = predict(k, md, parse_size(pk_ws), po);
      Output out(g.output);
      if (pk_notation) {
        out.stream() << ecm_notation(e) << '\n';
      } else if (format_of(g, Format::text) == Format::json) {
        out.stream() << prediction_to_json(e, false).dump() << '\n';
      } else if (format_of(g, Format::text) == Format::csv) {
        out.stream() << "kernel,machine,working_set_bytes,composed_cycles_per_iteration,"
                        "predicted_bandwidth_bytes_per_cycle,predicted_bandwidth_bytes_per_s,n_saturation\n"
                     << e.kernel << ',' << e.machine << ',' << e.working_set_bytes << ','
                     << probe::format_double(e.composed_cycles_per_iteration) << ','
                     << probe::format_double(e.predicted_bandwidth_bytes_per_cycle) << ','
                     << probe::format_double(e.predicted_bandwidth_bytes_per_s) << ',' << e.n_saturation << '\n';
      } else {
        show_prediction_text(out.stream(), e);
      }
      return 0;
    }
    if (probe_latency->parsed()) {
      auto exec = make_executor(g);
      emit_probe(g, probe::run_latency_probe(*exec, parse_size(pl_ws), settings));
      return 0;
    }
    if (probe_inst->parsed()) {
      auto exec = make_executor(g);
      const auto prec = parse_precision(pi_precision);
      if (!prec) throw precondition_error("unknown precision '" + pi_precision + "'");
      if (pi_mode != "latency" && pi_mode != "throughput") throw precondition_error("--mode takes latency or throughput");
      const auto mode = pi_mode == "latency" ? probe::InstMode::latency : probe::InstMode::throughput;
      emit_probe(g, probe::run_instruction_probe(*exec, {pi_mnemonic, width_arg(pi_width), *prec}, mode, pi_chains,
                                                 settings));
      return 0;
    }
    if (probe_bw->parsed()) {
      auto exec = make_executor(g);
      const auto k = exec->machine() ? builtin_kernel_for(*exec->machine(), pb_kernel, width_arg(pb_width))
                                     : builtin_kernel(pb_kernel, width_arg(pb_width));
      emit_probe(g, probe::run_bandwidth_probe(*exec, k, parse_size(pb_ws), pb_cores, settings));
      return 0;
    }
    if (probe_l2->parsed()) {
      auto exec = make_executor(g);
      const auto k = exec->machine() ? builtin_kernel_for(*exec->machine(), p2_kernel, width_arg(p2_width))
                                     : builtin_kernel(p2_kernel, width_arg(p2_width));
      emit_probe(g, probe::run_l2_bandwidth_probe(*exec, k, parse_size(p2_ws), settings));
      return 0;
    }
    if (probe_gather->parsed()) {
      auto exec = make_executor(g);
      emit_probe(g, probe::run_gather_probe(*exec, pg_level, pg_spread, settings));
      return 0;
    }
    if (sweep->parsed()) {
      const int kinds = !sw_profile.empty() + !sw_kernel.empty() + !sw_command.empty();
      if (kinds != 1) throw precondition_error("give exactly one of --profile, --kernel, --command");
      auto exec = make_executor(g);
      probe::Workload w;
      if (!sw_profile.empty()) {
        w.kind = probe::Workload::Kind::profile;
        w.profile = probe::builtin_profile(sw_profile);
      } else if (!sw_kernel.empty()) {
        w.kind = probe::Workload::Kind::kernel;
        w.kernel = exec->machine() ? builtin_kernel_for(*exec->machine(), sw_kernel, width_arg(sw_width))
                                   : builtin_kernel(sw_kernel, width_arg(sw_width));
        w.working_set_bytes = parse_size(sw_ws);
      } else {
        w.kind = probe::Workload::Kind::command;
        w.command = sw_command;
      }
      probe::SweepGrid grid{frequency_axis(sw_core), frequency_axis(sw_uncore), core_axis(sw_cores)};
      const auto result = probe::run_sweep(*exec, grid, w, sw_dwell);
      Output out(g.output);
      if (format_of(g, Format::json) == Format::csv) {
        out.stream() << probe::sweep_to_csv(result);
      } else {
        out.stream() << probe::sweep_to_json(result).dump() << '\n';
      }
      return 0;
    }
    if (report_eff->parsed()) {
      ScalingSeries s;
      for (const auto& doc : read_json_lines(re_file)) {
        const auto r = probe::result_from_json(doc);
        if (r.probe_name != "bandwidth") throw precondition_error("efficiency needs bandwidth probes, got " + r.probe_name);
        s.points.emplace_back(r.parameters.at("cores").get<int>(), r.value);
      }
      std::sort(s.points.begin(), s.points.end());
      const auto rep = efficiency_report(s, re_epsilon);
      Output out(g.output);
      const auto f = format_of(g, Format::text);
      if (f == Format::json) {
        out.stream() << efficiency_to_json(rep).dump() << '\n';
      } else if (f == Format::csv) {
        out.stream() << efficiency_to_csv(rep);
      } else {
        out.stream() << "parallel efficiency " << fmt(rep.parallel_efficiency, 3) << " at "
                     << rep.points.back().cores << " cores, saturation at " << rep.saturation_core_count << " cores\n";
        for (const auto& p : rep.points) {
          out.stream() << "  " << p.cores << "  " << fmt(p.bandwidth, 3) << "  " << fmt(p.efficiency, 3) << "\n";
        }
        if (rep.superlinear) out.stream() << "  note: superlinear points present\n";
      }
      return 0;
    }
    if (report_energy->parsed()) {
      Output out(g.output);
      const auto f = format_of(g, Format::text);
      if (f == Format::csv) out.stream() << energy_csv_header() << '\n';
      for (const auto& doc : read_json_lines(rn_file)) {
        const auto s = probe::sweep_from_json(doc);
        for (const auto& p : s.points) {
          if (!p.package_energy_joules) {
            std::cerr << "skipping point without energy reading\n";
            continue;
          }
          const auto r = energy_metrics(p.performance, p.unit, *p.package_energy_joules, p.duration_s,
                                        {p.observed_core_freq_hz, p.observed_uncore_freq_hz});
          if (f == Format::json) {
            out.stream() << energy_to_json(r).dump() << '\n';
          } else if (f == Format::csv) {
            out.stream() << energy_to_csv_row(r) << '\n';
          } else {
            out.stream() << s.workload << "  core " << fmt(p.observed_core_freq_hz * 1e-9) << " GHz  uncore "
                         << fmt(p.observed_uncore_freq_hz * 1e-9) << " GHz  cores " << p.cores << "  "
                         << fmt(r.performance, 2) << " " << r.unit << "  " << fmt(r.package_power_watts, 1) << " W  "
                         << fmt(r.efficiency, 3) << " " << r.unit << "/W\n";
          }
        }
      }
      return 0;
    }
    if (report_compare->parsed()) {
      const auto policy = parse_overlap_policy(rc_policy);
      if (!policy) throw precondition_error("--policy takes none or full");
      CompareOptions o{*policy, !rc_no_derate, rc_tolerance};
      Output out(g.output);
      const auto f = format_of(g, Format::text);
      if (f == Format::csv) out.stream() << compare_csv_header() << '\n';
      bool all_pass = true;
      for (const auto& doc : read_json_lines(rc_file)) {
        const auto r = probe::result_from_json(doc);
        const auto md = load_selected_machine(g, g.machine.empty() ? r.environment.machine : g.machine);
        const auto d = compare_probe(r, md, o);
        all_pass = all_pass && d.pass;
        if (f == Format::json) {
          out.stream() << deviation_to_json(d).dump() << '\n';
        } else if (f == Format::csv) {
          out.stream() << deviation_to_csv_row(d) << '\n';
        } else {
          out.stream() << r.probe_name << " " << r.parameters.value("kernel", "") << ": measured " << fmt(d.measured)
                       << " " << d.unit << ", predicted " << fmt(d.predicted) << " " << d.unit << ", deviation "
                       << fmt(d.relative * 100.0, 1) << "% " << (d.pass ? "PASS" : "FAIL") << "\n";
        }
      }
      return all_pass ? 0 : 4;
    }
  } catch (const Error& e) {
    std::cerr << "ecmkit: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "ecmkit: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
