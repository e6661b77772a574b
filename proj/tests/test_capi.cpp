#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>
#include <string>

#include "json.hpp"

#include "hcost/hcost.h"

namespace {

const char* kData = "/tmp/hcost_capi_scenes.jsonl";

void make_dataset() {
    static bool done = false;
    if (done) return;
    REQUIRE(hcost_generate_dataset("{\"scenes\": 25}", 7, kData) == HCOST_OK);
    done = true;
}

}  // namespace

TEST_CASE("status names are stable") {
    CHECK(std::strcmp(hcost_status_name(HCOST_OK), "ok") == 0);
    CHECK(std::strcmp(hcost_status_name(HCOST_ERR_CONFIG), "config-error") == 0);
    CHECK(std::strcmp(hcost_status_name(HCOST_ERR_DATA), "data-error") == 0);
    CHECK(std::strcmp(hcost_status_name(HCOST_ERR_NUMERIC), "numeric-error") == 0);
}

TEST_CASE("generate, open, and summarize a dataset") {
    make_dataset();
    hcost_dataset* ds = nullptr;
    REQUIRE(hcost_dataset_open(kData, &ds) == HCOST_OK);
    char* summary = nullptr;
    REQUIRE(hcost_dataset_summary_json(ds, &summary) == HCOST_OK);
    auto j = nlohmann::json::parse(summary);
    CHECK(j["scenes"] == 25);
    CHECK(j["queries"] == 75);
    CHECK(j["subsets"].size() == 5);
    CHECK(j["fingerprint"].get<std::uint64_t>() != 0);
    hcost_string_free(summary);
    hcost_dataset_close(ds);
}

TEST_CASE("error paths set distinct status codes and messages") {
    CHECK(hcost_generate_dataset("{\"bogus\": 1}", 0, "/tmp/hcost_capi_x.jsonl") ==
          HCOST_ERR_CONFIG);
    CHECK(std::strlen(hcost_last_error()) > 0);

    hcost_dataset* ds = nullptr;
    CHECK(hcost_dataset_open("/tmp/does_not_exist.jsonl", &ds) == HCOST_ERR_DATA);

    hcost_model* model = nullptr;
    CHECK(hcost_model_open("/tmp/does_not_exist.json", &model) == HCOST_ERR_DATA);

    CHECK(hcost_generate_dataset("{}", 0, nullptr) == HCOST_ERR_CONFIG);
}

TEST_CASE("train, reopen, evaluate through the C surface") {
    make_dataset();
    hcost_dataset* ds = nullptr;
    REQUIRE(hcost_dataset_open(kData, &ds) == HCOST_OK);

    const char* aux_cfg = "{\"phase\":\"aux\",\"epochs\":2,\"seed\":4}";
    REQUIRE(hcost_train(ds, aux_cfg, nullptr, "/tmp/hcost_capi_aux.json",
                        "/tmp/hcost_capi_aux_log.jsonl") == HCOST_OK);

    // Two epochs logged.
    std::ifstream log("/tmp/hcost_capi_aux_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 2);

    hcost_model* teacher = nullptr;
    REQUIRE(hcost_model_open("/tmp/hcost_capi_aux.json", &teacher) == HCOST_OK);
    char* meta = nullptr;
    REQUIRE(hcost_model_meta_json(teacher, &meta) == HCOST_OK);
    auto j = nlohmann::json::parse(meta);
    CHECK(j["mode"] == "semantic");
    CHECK(j["epoch"] == 2);
    hcost_string_free(meta);

    // Phase inf requires a teacher handle.
    const char* inf_cfg = "{\"phase\":\"inf\",\"epochs\":1,\"seed\":5}";
    CHECK(hcost_train(ds, inf_cfg, nullptr, "/tmp/hcost_capi_inf.json", nullptr) ==
          HCOST_ERR_CONFIG);
    REQUIRE(hcost_train(ds, inf_cfg, teacher, "/tmp/hcost_capi_inf.json", nullptr) ==
            HCOST_OK);

    hcost_model* student = nullptr;
    REQUIRE(hcost_model_open("/tmp/hcost_capi_inf.json", &student) == HCOST_OK);
    char* smeta = nullptr;
    REQUIRE(hcost_model_meta_json(student, &smeta) == HCOST_OK);
    CHECK(nlohmann::json::parse(smeta)["mode"] == "points");
    hcost_string_free(smeta);

    double all_f1 = -1;
    REQUIRE(hcost_evaluate(ds, student, 0.5, 0, "/tmp/hcost_capi_metrics.csv", &all_f1) ==
            HCOST_OK);
    CHECK(all_f1 >= 0.0);
    CHECK(all_f1 <= 1.0);
    std::ifstream csv("/tmp/hcost_capi_metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "subset,count,f1_at_0.5");

    // Oracle mode needs no model and scores 1.0.
    double oracle_f1 = 0;
    REQUIRE(hcost_evaluate(ds, nullptr, 0.5, 1, nullptr, &oracle_f1) == HCOST_OK);
    CHECK(oracle_f1 == 1.0);

    CHECK(hcost_evaluate(ds, nullptr, 0.5, 0, nullptr, nullptr) == HCOST_ERR_CONFIG);

    hcost_model_close(student);
    hcost_model_close(teacher);
    hcost_dataset_close(ds);
}

TEST_CASE("bad train configs are rejected") {
    make_dataset();
    hcost_dataset* ds = nullptr;
    REQUIRE(hcost_dataset_open(kData, &ds) == HCOST_OK);
    CHECK(hcost_train(ds, "not json", nullptr, "/tmp/x.json", nullptr) == HCOST_ERR_CONFIG);
    CHECK(hcost_train(ds, "{\"phase\":\"warp\"}", nullptr, "/tmp/x.json", nullptr) ==
          HCOST_ERR_CONFIG);
    CHECK(hcost_train(ds, "{\"deltas\":[0.1,0.5,0.0]}", nullptr, "/tmp/x.json", nullptr) ==
          HCOST_ERR_CONFIG);
    hcost_dataset_close(ds);
}

TEST_CASE("gradcheck runs through the C surface") {
    int all_passed = 0;
    REQUIRE(hcost_gradcheck(3, 4, "/tmp/hcost_capi_gc.txt", &all_passed) == HCOST_OK);
    CHECK(all_passed == 1);
    std::ifstream report("/tmp/hcost_capi_gc.txt");
    std::string first;
    std::getline(report, first);
    CHECK(first.find("PASS") != std::string::npos);
}
