// plab: command-line front end for the poisoning/defense lab.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plab/error.hpp"
#include "plab/experiment.hpp"
#include "plab/kernels.hpp"

namespace fs = std::filesystem;
using namespace plab;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

template <class Item>
std::vector<std::string> item_ids(const std::vector<Item>& items) {
  std::vector<std::string> ids;
  for (const auto& x : items) ids.push_back(x.id);
  return ids;
}

void dump_world_embeddings(const fs::path& dir, const World& w, const Matrix& passages, const Matrix& train,
                           const Matrix& test) {
  write_embedding_dump(dir / "passages.bin", passages);
  write_ids(dir / "passages.ids", item_ids(w.passages));
  write_embedding_dump(dir / "train_queries.bin", train);
  write_ids(dir / "train_queries.ids", item_ids(w.train_queries));
  write_embedding_dump(dir / "test_queries.bin", test);
  write_ids(dir / "test_queries.ids", item_ids(w.test_queries));
}

Matrix undefended(const World& w, const auto& items) {
  Matrix m(items.size(), w.embedder.config().dim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto e = w.embedder.embed(items[i].tokens);
    std::copy(e.values().begin(), e.values().end(), m.row(i).begin());
  }
  return m;
}

nlohmann::json metrics_json(const RunResult& r) {
  nlohmann::json j;
  for (const auto& [n, x] : r.poison.success_at) j["success_at"][std::to_string(n)] = x;
  for (const auto& [k, x] : r.retrieval.accuracy_at) j["accuracy_at"][std::to_string(k)] = x;
  if (r.recon)
    j["recon"] = {{"bleu", r.recon->bleu}, {"token_f1", r.recon->token_f1}, {"exact", r.recon->exact}, {"cos", r.recon->cos}};
  else
    j["recon"] = nullptr;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plab: corpus poisoning and embedding-inversion defense lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  bool dump_table = false;
  std::vector<double> lambdas{0.001, 0.01, 0.1, 1.0};
  std::vector<std::string> run_dirs;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "Directory for all outputs")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-corpus", "Write the corpus and vocabulary as JSONL/text");
  add_common(gen);
  auto* emb = app.add_subcommand("embed", "Write undefended passage and query embeddings");
  add_common(emb);
  emb->add_flag("--dump-table", dump_table, "Also write the token table in text format");
  auto* def = app.add_subcommand("defend", "Write embeddings after the defense pipeline");
  add_common(def);
  auto* idx = app.add_subcommand("index", "Build and save the corpus index");
  add_common(idx);
  auto* atk = app.add_subcommand("attack", "Cluster training queries and build adversarial entries");
  add_common(atk);
  auto* ev = app.add_subcommand("eval", "Run the pipeline and write metrics only");
  add_common(ev);
  auto* run = app.add_subcommand("run", "Full pipeline: report.json, report.md and artifacts");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep-noise", "Re-run the pipeline for each noise level");
  add_common(sweep);
  sweep->add_option("--lambdas", lambdas, "Comma-separated noise scales")->delimiter(',')->capture_default_str();
  auto* rep = app.add_subcommand("report", "Merge run directories into one markdown table");
  rep->add_option("dirs", run_dirs, "Run directories containing report.json")->required();
  rep->add_option("--out-dir", out_dir, "Directory for report.md (stdout only when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }

  kernels::configure_threads_from_env();
  try {
    if (rep->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const auto table = merge_reports(dirs);
      std::cout << table;
      if (rep->count("--out-dir") > 0) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "report.md", table);
      }
      return 0;
    }

    const auto cfg = load_config(config_path);
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (gen->parsed()) {
      const auto c = load_corpus(cfg);
      write_jsonl(out / "passages.jsonl", c.passages);
      write_jsonl(out / "train_queries.jsonl", c.train_queries);
      write_jsonl(out / "test_queries.jsonl", c.test_queries);
      write_vocabulary(out / "vocab.txt", c.vocab);
      return 0;
    }

    const auto world = build_world(cfg);
    if (emb->parsed()) {
      dump_world_embeddings(out, world, undefended(world, world.passages), undefended(world, world.train_queries),
                            undefended(world, world.test_queries));
      if (dump_table) write_table_file(out / "table.txt", world.embedder.vocab(), world.embedder.table());
    } else if (def->parsed()) {
      dump_world_embeddings(out, world, world.corpus, world.train, world.test);
    } else if (idx->parsed()) {
      save_index(world.index, out / "index");
    } else if (atk->parsed()) {
      const auto clustering = cluster_queries(cfg, world);
      const auto poisoned = attack(cfg, world, clustering);
      write_embedding_dump(out / "centroids.bin", clustering.centroids);
      std::vector<std::string> cids;
      for (std::size_t c = 0; c < clustering.k; ++c) cids.push_back("centroid:" + std::to_string(c));
      write_ids(out / "centroids.ids", cids);
      std::vector<Embedding> vecs;
      for (const auto& e : poisoned.result.entries) vecs.push_back(e.vector);
      write_embedding_dump(out / "adversarial.bin", to_matrix(vecs));
      write_ids(out / "adversarial.ids", poisoned.result.ids());
      write_attack_jsonl(out / "attack.jsonl", poisoned.result, "adversarial.bin");
    } else if (ev->parsed()) {
      const auto r = run_experiment(cfg, world);
      write_text(out / "eval.json", metrics_json(r).dump(2) + "\n");
    } else if (run->parsed()) {
      const auto r = run_experiment(cfg, world);
      write_run_outputs(out, cfg, world, r);
      std::cout << report_markdown(report_json(cfg, world, r));
    } else if (sweep->parsed()) {
      const auto rows = sweep_noise(cfg, lambdas);
      const auto csv = sweep_csv(cfg, rows);
      write_text(out / "sweep.csv", csv);
      std::cout << csv;
    }
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "plab: error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "plab: internal error: %s\n", e.what());
    return static_cast<int>(ErrorKind::Internal);
  }
}
