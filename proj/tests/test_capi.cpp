#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "bimgame/bimgame.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bimgame_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bim_config* desk_config() {
  bim_config* cfg = nullptr;
  REQUIRE(bim_config_create(&cfg) == BIM_OK);
  return cfg;
}

void collect(const char* line, void* user) {
  static_cast<std::vector<std::string>*>(user)->push_back(line);
}

}  // namespace

TEST_CASE("status names and version are available") {
  CHECK(std::string(bim_version()).size() > 0);
  CHECK(std::string(bim_status_name(BIM_OK)) == "ok");
  CHECK(std::string(bim_status_name(BIM_ERR_STALE_ARTIFACT)) == "stale artifact");
}

TEST_CASE("null arguments report invalid argument with a message") {
  CHECK(bim_config_create(nullptr) == BIM_ERR_INVALID_ARGUMENT);
  CHECK(std::string(bim_last_error()).find("null") != std::string::npos);
  CHECK(bim_maze_reset(nullptr, 0) == BIM_ERR_INVALID_ARGUMENT);
  bim_config_free(nullptr);
  bim_maze_free(nullptr);
  CHECK(bim_maze_wall_count(nullptr) == 0);
}

TEST_CASE("a successful call clears the last error") {
  CHECK(bim_config_create(nullptr) != BIM_OK);
  bim_config* cfg = desk_config();
  CHECK(std::string(bim_last_error()).empty());
  bim_config_free(cfg);
}

TEST_CASE("last error is per thread") {
  CHECK(bim_config_create(nullptr) != BIM_OK);
  std::string other = "unset";
  std::thread t([&] { other = bim_last_error(); });
  t.join();
  CHECK(other.empty());
  CHECK(!std::string(bim_last_error()).empty());
}

TEST_CASE("config set, get, save and reload round trip") {
  const auto dir = scratch("config");
  bim_config* cfg = desk_config();
  REQUIRE(bim_config_set(cfg, "geometry.preset", "desk") == BIM_OK);
  REQUIRE(bim_config_set(cfg, "budget", "1000") == BIM_OK);
  CHECK(bim_config_set(cfg, "", "x") == BIM_ERR_INVALID_ARGUMENT);
  char buf[64];
  int found = 0;
  REQUIRE(bim_config_get(cfg, "budget", buf, sizeof buf, &found) == BIM_OK);
  CHECK(found == 1);
  CHECK(std::string(buf) == "1000");
  REQUIRE(bim_config_get(cfg, "missing", buf, sizeof buf, &found) == BIM_OK);
  CHECK(found == 0);
  char tiny[3];
  REQUIRE(bim_config_get(cfg, "budget", tiny, sizeof tiny, &found) == BIM_OK);
  CHECK(std::string(tiny) == "10");

  const std::string path = (dir / "c.cfg").string();
  REQUIRE(bim_config_save(cfg, path.c_str()) == BIM_OK);
  bim_config* back = nullptr;
  REQUIRE(bim_config_load(path.c_str(), &back) == BIM_OK);
  REQUIRE(bim_config_get(back, "geometry.preset", buf, sizeof buf, &found) == BIM_OK);
  CHECK(std::string(buf) == "desk");
  bim_config_free(back);
  bim_config_free(cfg);

  bim_config* none = nullptr;
  CHECK(bim_config_load((dir / "absent.cfg").string().c_str(), &none) == BIM_ERR_IO);
  CHECK(none == nullptr);
}

TEST_CASE("maze handle steps deterministically and stays contained") {
  bim_config* geo = nullptr;
  REQUIRE(bim_config_parse("preset = desk\n", &geo) == BIM_OK);
  bim_maze* a = nullptr;
  bim_maze* b = nullptr;
  REQUIRE(bim_maze_create(geo, "FULL", &a) == BIM_OK);
  REQUIRE(bim_maze_create(geo, "FULL", &b) == BIM_OK);
  CHECK(bim_maze_wall_count(a) == 3);
  REQUIRE(bim_maze_reset(a, 11) == BIM_OK);
  REQUIRE(bim_maze_reset(b, 11) == BIM_OK);
  for (int t = 0; t < 300; ++t) {
    const int action = (t * 7 + 3) % 5;
    bim_step_info ia{}, ib{};
    REQUIRE(bim_maze_step(a, action, &ia) == BIM_OK);
    REQUIRE(bim_maze_step(b, action, &ib) == BIM_OK);
    CHECK(ia.reward == ib.reward);
    double pen = 1.0;
    REQUIRE(bim_maze_penetration(a, &pen) == BIM_OK);
    CHECK(pen <= 1e-9);
  }
  bim_state sa{}, sb{};
  REQUIRE(bim_maze_state(a, &sa) == BIM_OK);
  REQUIRE(bim_maze_state(b, &sb) == BIM_OK);
  CHECK(sa.x == sb.x);
  CHECK(sa.vy == sb.vy);
  CHECK(sa.step_count == 300);
  CHECK(sa.ring >= 1);
  CHECK(bim_maze_step(a, 5, nullptr) == BIM_ERR_INVALID_ARGUMENT);
  CHECK(bim_maze_step(a, -1, nullptr) == BIM_ERR_INVALID_ARGUMENT);
  bim_maze_free(a);
  bim_maze_free(b);

  bim_maze* bad = nullptr;
  CHECK(bim_maze_create(geo, "SIDEWAYS", &bad) == BIM_ERR_CONFIG);
  CHECK(bad == nullptr);
  bim_config_free(geo);
}

TEST_CASE("maze geometry csv and png are written") {
  const auto dir = scratch("inspect");
  bim_maze* m = nullptr;
  REQUIRE(bim_maze_create(nullptr, "FULL", &m) == BIM_OK);
  const std::string csv = (dir / "g.csv").string();
  const std::string png = (dir / "s.png").string();
  REQUIRE(bim_maze_write_geometry_csv(m, csv.c_str()) == BIM_OK);
  REQUIRE(bim_maze_write_png(m, 64, png.c_str()) == BIM_OK);
  CHECK(bim_maze_write_png(m, 2, png.c_str()) == BIM_ERR_INVALID_ARGUMENT);

  std::ifstream in(csv);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "kind,wall,radius,gate,center_deg,half_width_deg");
  int gates = 0;
  while (std::getline(in, line)) gates += line.rfind("gate,", 0) == 0 ? 1 : 0;
  CHECK(gates == 10);

  std::ifstream img(png, std::ios::binary);
  char sig[8] = {};
  img.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
  bim_maze_free(m);
}

TEST_CASE("gradcheck through the C interface stays within tolerance") {
  std::vector<std::string> lines;
  double worst = 1.0;
  REQUIRE(bim_nn_gradcheck(1, collect, &lines, &worst) == BIM_OK);
  CHECK(lines.size() == 3);
  CHECK(worst <= 1e-4);
  CHECK(bim_nn_gradcheck(0, nullptr, nullptr, nullptr) == BIM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("expert, pretrain, value, dagger, rl and evaluation chain through the C interface") {
  const auto dir = scratch("chain");
  bim_config* gen = nullptr;
  REQUIRE(bim_config_parse("task = FULL\nn = 5\ngeometry.preset = desk\nexpert.seed = 2\n",
                           &gen) == BIM_OK);
  const std::string data = (dir / "d.traj").string();
  std::vector<std::string> log;
  REQUIRE(bim_expert_generate(gen, data.c_str(), collect, &log) == BIM_OK);
  CHECK(fs::exists(data));
  CHECK(fs::exists(data + ".hist.csv"));
  CHECK(!log.empty());

  bim_config* pre = nullptr;
  REQUIRE(bim_config_parse("arch.preset = desk\narch.height = 16\narch.width = 16\nepochs = 1\n",
                           &pre) == BIM_OK);
  const std::string pi = (dir / "pi.net").string();
  const std::string vh = (dir / "vh.net").string();
  const std::string metrics = (dir / "m.csv").string();
  REQUIRE(bim_imitate_pretrain(pre, data.c_str(), 0, pi.c_str(), metrics.c_str(), nullptr,
                               nullptr) == BIM_OK);
  REQUIRE(bim_imitate_pretrain(pre, data.c_str(), 1, vh.c_str(), nullptr, nullptr, nullptr) ==
          BIM_OK);
  CHECK(fs::exists(metrics));

  bim_config* rl = nullptr;
  const std::string rl_text = "geometry.preset = desk\nworkers = 2\nbudget = 3000\ninit = " + pi +
                              "\nshaping = " + vh + "\n";
  REQUIRE(bim_config_parse(rl_text.c_str(), &rl) == BIM_OK);
  const fs::path run = dir / "run";
  REQUIRE(bim_rl_train(rl, run.string().c_str(), nullptr, nullptr) == BIM_OK);
  for (const char* f : {"curve.csv", "eval.csv", "final.net", "manifest.txt"})
    CHECK(fs::exists(run / f));

  // A trainable checkpoint is refused as the shaping potential.
  bim_config* bad = nullptr;
  const std::string bad_text = "geometry.preset = desk\nbudget = 100\nshaping = " + pi + "\n";
  REQUIRE(bim_config_parse(bad_text.c_str(), &bad) == BIM_OK);
  CHECK(bim_rl_train(bad, (dir / "bad").string().c_str(), nullptr, nullptr) ==
        BIM_ERR_PRECONDITION);

  bim_config* ev = nullptr;
  REQUIRE(bim_config_parse("geometry.preset = desk\nepisodes = 2\nmax_steps = 50\n", &ev) ==
          BIM_OK);
  double ret = -1, solved = -1, len = -1;
  REQUIRE(bim_evaluate(pi.c_str(), ev, &ret, &solved, &len) == BIM_OK);
  CHECK(solved >= 0.0);
  CHECK(solved <= 1.0);
  CHECK(len <= 50.0);

  bim_config* dag = nullptr;
  REQUIRE(bim_config_parse("iterations = 2\nrollouts = 1\nmax_steps = 40\neval_episodes = 1\n"
                           "train.arch.preset = desk\ntrain.arch.height = 16\n"
                           "train.arch.width = 16\ntrain.epochs = 1\n",
                           &dag) == BIM_OK);
  const std::string dag_csv = (dir / "dagger.csv").string();
  REQUIRE(bim_dagger_run(dag, data.c_str(), (dir / "dag.net").string().c_str(), dag_csv.c_str(),
                         nullptr, nullptr) == BIM_OK);
  CHECK(fs::exists(dag_csv));

  char text[512];
  double ratio = -1;
  const std::string curve = (run / "curve.csv").string();
  REQUIRE(bim_speedup(curve.c_str(), curve.c_str(), 0.0, 0, text, sizeof text, &ratio) == BIM_OK);
  CHECK(std::string(text).size() > 0);
  CHECK(bim_speedup((dir / "none.csv").string().c_str(), curve.c_str(), 0.0, 0, text, sizeof text,
                    &ratio) == BIM_ERR_IO);

  for (bim_config* c : {gen, pre, rl, bad, ev, dag}) bim_config_free(c);
}

TEST_CASE("a garbage dataset is a dataset error") {
  const auto dir = scratch("garbage");
  const std::string path = (dir / "junk.traj").string();
  std::ofstream(path) << "not a dataset";
  CHECK(bim_imitate_pretrain(nullptr, path.c_str(), 0, (dir / "x.net").string().c_str(), nullptr,
                             nullptr, nullptr) == BIM_ERR_DATASET);
}
