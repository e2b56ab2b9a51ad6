#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <thread>

#include "rrto/service.hpp"
#include "tiny_models.hpp"

using namespace rrto;
using namespace rrto::testing;
using rrto::service::json;
using rrto::service::Response;
using rrto::service::Service;

namespace {

std::shared_ptr<const ModelSet> model_set() {
  static const auto set = [] {
    const Models& m = models();
    auto s = std::make_shared<ModelSet>();
    s->geometry = m.geo;
    s->sol1d = m.sol1d;
    s->sol2d = m.sol2d;
    s->maps = m.maps;
    return std::shared_ptr<const ModelSet>(s);
  }();
  return set;
}

const Service& svc() {
  static const Service s(model_set());
  return s;
}

json grid(const Grid& g) { return {{"shape", {g.rows, g.cols}}, {"data", g.values}}; }

Response post(const std::string& path, const json& body) { return svc().handle("POST", path, body.dump()); }

}  // namespace

TEST(Dump17, RoundTripsDoublesAndSortsKeys) {
  EXPECT_EQ(service::dump17(json{{"b", 0.1}, {"a", 1}}), R"({"a":1,"b":0.10000000000000001})");
  EXPECT_EQ(service::dump17(json{std::nan(""), 1.0 / 3.0}), "[null,0.33333333333333331]");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(json::parse(service::dump17(json(v))).get<double>(), v);
}

TEST(Service, ListsLoadedModels) {
  const Response r = svc().handle("GET", "/v1/models", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["mesh"]["rows"], 16);
  EXPECT_EQ(r.body["mesh"]["cols"], 16);
  EXPECT_EQ(r.body["autoencoders"].size(), 3u);
  EXPECT_EQ(r.body["maps"].size(), 6u);
  EXPECT_EQ(r.body["pipelines"], json({"s", "1d", "2d"}));
  const json& geo = r.body["autoencoders"][0];
  EXPECT_EQ(geo["name"], "geometry");
  EXPECT_EQ(geo["hull"].size(), static_cast<std::size_t>(geo["k_max"].get<int>()));
}

TEST(Service, StatusCodes) {
  const Grid x = models().data.test.X[0];
  EXPECT_EQ(svc().handle("GET", "/v1/nothing", "").status, 404);
  EXPECT_EQ(svc().handle("GET", "/v1/fem/verify", "").status, 404);
  EXPECT_EQ(post("/v1/predict/direct/3d", {{"grid", grid(x)}}).status, 404);
  EXPECT_EQ(svc().handle("POST", "/v1/fem/verify", "{not json").status, 400);
  EXPECT_EQ(svc().handle("POST", "/v1/fem/verify", "[1,2]").status, 400);
  EXPECT_EQ(post("/v1/fem/verify", json::object()).status, 400);
  EXPECT_EQ(post("/v1/latent/interpolate", {{"alpha_a", {1.0}}, {"alpha_b", {"x"}}, {"t", 0.5}}).status, 400);
  EXPECT_EQ(post("/v1/fem/verify", {{"grid", grid(Grid(8, 8, 0.5))}}).status, 422);
  EXPECT_EQ(post("/v1/fem/verify", {{"grid", grid(Grid(16, 16, 1.5))}}).status, 422);
  EXPECT_EQ(post("/v1/latent/interpolate", {{"alpha_a", {0.0, 1.0}}, {"alpha_b", {1.0, 2.0}}, {"t", 1.5}}).status,
            422);
  EXPECT_EQ(post("/v1/geometry/decode", {{"alpha", std::vector<double>(models().geo->kmax() + 1, 0.0)}}).status, 422);
  EXPECT_EQ(post("/v1/predict/inverse/1d", {{"curve", {1.0, 2.0}}}).status, 422);

  const Service empty(nullptr);
  EXPECT_EQ(empty.handle("GET", "/v1/models", "").status, 503);
  EXPECT_EQ(empty.handle("POST", "/v1/geometry/decode", R"({"alpha":[0]})").status, 503);
  const Response err = empty.handle("GET", "/v1/models", "");
  EXPECT_EQ(err.body["status"], 503);
  EXPECT_TRUE(err.body["error"].is_string());
}

TEST(Service, MissingMapIs404) {
  auto partial = std::make_shared<ModelSet>(*model_set());
  partial->maps.erase({Qoi::d2, Direction::inverse});
  const Service s(partial);
  const Grid x = models().data.test.X[0];
  EXPECT_EQ(s.handle("POST", "/v1/predict/inverse/2d", json{{"field", grid(x)}}.dump()).status, 404);
  EXPECT_EQ(s.handle("POST", "/v1/predict/direct/2d", json{{"grid", grid(x)}}.dump()).status, 200);
}

TEST(Service, IdenticalRequestsGiveIdenticalBytes) {
  const json body{{"grid", grid(models().data.test.X[1])}};
  for (const char* path : {"/v1/fem/verify", "/v1/predict/direct/2d", "/v1/geometry/encode"}) {
    const std::string a = service::dump17(post(path, body).body);
    const std::string b = service::dump17(post(path, body).body);
    EXPECT_EQ(a, b) << path;
  }
}

TEST(Service, FemVerifyMatchesRoundtripFemPath) {
  const Grid x = models().data.train.X[2];
  const Response r = post("/v1/fem/verify", {{"grid", grid(x)}});
  ASSERT_EQ(r.status, 200);
  const FemReport ref = fem_verify(x, simp_of(*models().geo));
  EXPECT_EQ(r.body["vm_diag"].get<std::vector<double>>(), ref.vm_diag);
  EXPECT_EQ(r.body["compliance"].get<double>(), ref.compliance);
  EXPECT_EQ(r.body["vm_grid"]["data"].get<std::vector<double>>(), ref.vm.values);

  // A decoded inverse design goes through the same solve in roundtrip_verify.
  const Pipeline p = make(Qoi::d1);
  const Roundtrip rt = p.roundtrip_verify(models().data.train.s_1d[3]);
  ASSERT_FALSE(rt.out_of_range);
  const Response v = post("/v1/fem/verify", {{"grid", grid(rt.x)}});
  EXPECT_EQ(v.body["vm_diag"].get<std::vector<double>>(), rt.s_fem);
}

TEST(Service, EncodeThenDecodeMatchesPipeline) {
  const Grid x = models().data.test.X[2];
  const Response e = post("/v1/geometry/encode", {{"grid", grid(x)}});
  ASSERT_EQ(e.status, 200);
  const auto alpha = e.body["alpha"].get<std::vector<double>>();
  const Response d = post("/v1/geometry/decode", {{"alpha", alpha}});
  ASSERT_EQ(d.status, 200);

  const Pipeline p = make(Qoi::scalar);
  const Tensor xt({1, 1, x.rows, x.cols}, x.values);
  const nn::RowMat a = p.encode_geometry(xt);
  EXPECT_EQ(alpha, std::vector<double>(a.data(), a.data() + a.size()));
  const Tensor ref = p.decode_geometry(a);
  EXPECT_EQ(d.body["grid"]["data"].get<std::vector<double>>(), std::vector<double>(ref.data.begin(), ref.data.end()));
  for (double v : ref.data) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Service, DirectPayloadShapes) {
  const json body{{"grid", grid(models().data.test.X[0])}};
  EXPECT_TRUE(post("/v1/predict/direct/s", body).body["value"].is_number());
  EXPECT_EQ(post("/v1/predict/direct/1d", body).body["curve"].size(), 16u);
  EXPECT_EQ(post("/v1/predict/direct/2d", body).body["field"]["shape"], json({16, 16}));
}

TEST(Service, ScalarInverseFlagsOutOfRange) {
  const Response far = post("/v1/predict/inverse/s", {{"value", 1e6}});
  ASSERT_EQ(far.status, 200);
  EXPECT_TRUE(far.body["out_of_range"].get<bool>());
  const double inside = models().data.train.s_scalar[0];
  EXPECT_FALSE(post("/v1/predict/inverse/s", {{"value", inside}}).body["out_of_range"].get<bool>());
}

TEST(Service, InterpolateIsConvexCombination) {
  const Response r = post("/v1/latent/interpolate", {{"alpha_a", {0.0, 2.0}}, {"alpha_b", {1.0, 4.0}}, {"t", 0.25}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["alpha"], json({0.25, 2.5}));
}

TEST(Service, ServesOverHttp) {
  httplib::Server server;
  svc().bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto get = client.Get("/v1/models");
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(get->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(get->body, service::dump17(svc().handle("GET", "/v1/models", "").body));

  const auto bad = client.Post("/v1/fem/verify", "{}", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  const auto pre = client.Options("/v1/fem/verify");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);

  server.stop();
  t.join();
}
