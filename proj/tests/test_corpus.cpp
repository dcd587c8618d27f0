#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "acfuzz/corpus.hpp"
#include "acfuzz/role_analysis.hpp"
#include "acfuzz/util.hpp"
#include "support.hpp"

using namespace acfuzz;
namespace fs = std::filesystem;

namespace {

RequestRecord rec(Method m, const std::string& url, const std::string& body = "") {
  return make_record(m, url, {}, body);
}

}  // namespace

TEST(UniquenessKey, ValuesDoNotParticipate) {
  auto a = rec(Method::kPost, "http://h/lms/classes/Users.php?f=save",
               "id=1711440657&firstname=ibdjweyxfoz&middlename=a&lastname=b&username=c&password=d");
  auto b = rec(Method::kPost, "http://h/lms/classes/Users.php?f=delete",
               "password=x&username=y&lastname=z&middlename=w&firstname=v&id=2");
  EXPECT_EQ(uniqueness_key(a), uniqueness_key(b));
  EXPECT_EQ(uniqueness_key(rec(Method::kGet, "http://h/del.php?del=5")),
            uniqueness_key(rec(Method::kGet, "http://h/del.php?del=9")));
  EXPECT_NE(uniqueness_key(rec(Method::kGet, "http://h/index.php")),
            uniqueness_key(rec(Method::kPost, "http://h/index.php")));
}

TEST(UniquenessKey, NamesPathsAndOriginsMatter) {
  auto base = uniqueness_key(rec(Method::kGet, "http://h/a.php?x=1"));
  EXPECT_NE(base, uniqueness_key(rec(Method::kGet, "http://h/a.php?y=1")));
  EXPECT_NE(base, uniqueness_key(rec(Method::kGet, "http://h/b.php?x=1")));
  EXPECT_NE(base, uniqueness_key(rec(Method::kGet, "http://h:8080/a.php?x=1")));
  EXPECT_NE(base, uniqueness_key(rec(Method::kGet, "http://h/a.php?x=1&x2=")));
  // Headers and cookies are excluded.
  auto with_cookie = make_record(Method::kGet, "http://h/a.php?x=1", {{"Cookie", "s=1"}, {"Referer", "http://h/"}}, "");
  EXPECT_EQ(base, uniqueness_key(with_cookie));
}

TEST(UniquenessKey, MalformedUrlIsRejected) {
  for (const char* bad : {"", "not a url", "ftp://h/x", "/relative/path", "http://"}) {
    try {
      make_record(Method::kGet, bad, {}, "");
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMalformedUrl) << bad;
    }
  }
}

TEST(Corpus, StoreOutcomes) {
  Corpus c("zzfuzzzz");
  auto r = rec(Method::kGet, "http://h/admin/users.php?page=2");
  EXPECT_EQ(c.store_request(r, "admin"), StoreOutcome::kNew);
  EXPECT_EQ(c.snapshot()[0].role_labels, (RoleSet{"admin"}));
  EXPECT_EQ(c.store_request(rec(Method::kGet, "http://h/admin/users.php?page=3"), "manager"),
            StoreOutcome::kLabelAdded);
  EXPECT_EQ(c.snapshot()[0].role_labels, (RoleSet{"admin", "manager"}));
  EXPECT_EQ(c.store_request(r, "admin"), StoreOutcome::kDuplicate);
  EXPECT_EQ(c.size(), 1u);
  // The first request's values stay on the record; later values reach the param corpus.
  EXPECT_EQ(c.snapshot()[0].url.query_value("page"), "2");
  auto page = c.param("page");
  ASSERT_TRUE(page);
  EXPECT_EQ(page->values.size(), 2u);
  EXPECT_EQ(page->values.at("3"), (RoleSet{"manager"}));
}

TEST(Corpus, NestedValuesAreStoredRawAndFlattened) {
  Corpus c("zzfuzzzz");
  auto r = rec(Method::kPost, "http://h/wp-admin/admin-ajax.php",
               "action=wcfm_ajax_controller&controller=wcfm-customers-manage"
               "&wcfm_customers_manage_form=user_email%3Da%2540b.c%26customer_id%3D1&wcfm_ajax_nonce=ab12");
  c.store_request(r, "shop_manager");
  auto stored = c.snapshot().at(0);
  bool raw = false, child = false;
  for (const auto& p : stored.body_params) {
    if (p.name == "wcfm_customers_manage_form" && !p.parent) raw = true;
    if (p.name == "customer_id" && p.parent == std::optional<std::string>("wcfm_customers_manage_form")) {
      child = true;
      EXPECT_EQ(p.value, "1");
    }
  }
  EXPECT_TRUE(raw);
  EXPECT_TRUE(child);
  EXPECT_TRUE(c.param("customer_id"));
  EXPECT_TRUE(c.param("user_email"));
  // Child names do not change the key.
  auto other = rec(Method::kPost, "http://h/wp-admin/admin-ajax.php",
                   "action=x&controller=y&wcfm_customers_manage_form=customer_id%3D8&wcfm_ajax_nonce=z");
  EXPECT_EQ(uniqueness_key(stored), uniqueness_key(other));
}

TEST(Corpus, ReferenceValuePools) {
  Corpus c("zzfuzzzz");
  auto a = rec(Method::kPost, "http://h/wp-admin/admin-ajax.php",
               "action=x&controller=wcfm-customers-manage&customer_id=0");
  auto b = rec(Method::kPost, "http://h/wp-admin/admin-ajax.php",
               "action=x&controller=wcfm-customers-manage&customer_id=1");
  c.store_request(a, "user");
  c.store_request(b, "admin");
  auto id = c.snapshot()[0].id;
  c.set_param_classes(id, {{"action", ParamClass::kLessImportant},
                           {"controller", ParamClass::kReference},
                           {"customer_id", ParamClass::kReference}});
  EXPECT_EQ(c.reference_value_pool(ValueKind::kNumeric), (std::vector<std::string>{"0", "1"}));
  EXPECT_EQ(c.reference_value_pool(ValueKind::kText), (std::vector<std::string>{"wcfm-customers-manage"}));
  EXPECT_EQ(c.reference_value_pool(ValueKind::kNumeric, std::string("user")), (std::vector<std::string>{"1"}));
  EXPECT_EQ(c.reference_values_of_role("user"), (std::set<std::string>{"0", "wcfm-customers-manage"}));
}

TEST(Corpus, PoolEmptyWhenRoleSawEverything) {
  Corpus c("zzfuzzzz");
  c.store_request(rec(Method::kGet, "http://h/n.php?id=3"), "user");
  c.store_request(rec(Method::kGet, "http://h/n.php?id=4"), "user");
  c.set_param_classes(c.snapshot()[0].id, {{"id", ParamClass::kReference}});
  EXPECT_FALSE(c.reference_value_pool(ValueKind::kNumeric, std::string("user")));
  EXPECT_FALSE(c.reference_value_pool(ValueKind::kText));
  EXPECT_TRUE(c.reference_value_pool(ValueKind::kNumeric));
}

TEST(Corpus, ClassMergePrefersSecurityThenReference) {
  Corpus c("zzfuzzzz");
  c.store_request(rec(Method::kGet, "http://h/a.php?tok=1"), "u");
  c.store_request(rec(Method::kGet, "http://h/b.php?tok=2"), "u");
  auto snap = c.snapshot();
  c.set_param_classes(snap[0].id, {{"tok", ParamClass::kReference}});
  c.set_param_classes(snap[1].id, {{"tok", ParamClass::kLessImportant}});
  EXPECT_EQ(c.param("tok")->param_class, ParamClass::kReference);
  c.set_param_classes(snap[1].id, {{"tok", ParamClass::kSecurityMeasure}});
  EXPECT_EQ(c.param("tok")->param_class, ParamClass::kSecurityMeasure);
  EXPECT_EQ(c.find(snap[1].id)->param_class("tok"), ParamClass::kSecurityMeasure);
}

TEST(Corpus, AccountValuesPreferOwnUniqueOnes) {
  Corpus c("zzfuzzzz");
  c.store_request(rec(Method::kGet, "http://h/a.php?token=shared"), "admin");
  c.store_request(rec(Method::kGet, "http://h/b.php?token=shared"), "member");
  c.store_request(rec(Method::kGet, "http://h/c.php?token=mine"), "member");
  EXPECT_EQ(c.account_values("token", "member").front(), "mine");
  EXPECT_TRUE(c.account_values("token", "nobody").empty());
}

TEST(Corpus, PersistenceRoundTripAndResume) {
  test::TempDir dir("corpus");
  std::string id;
  {
    Corpus c("zzfuzzzz", dir.path());
    c.store_request(make_record(Method::kPost, "http://h/e.php?editid=3", {{"Referer", "http://h/m.php"}},
                                "title=a&body=b"),
                    "user");
    c.store_request(rec(Method::kPost, "http://h/e.php?editid=4", "title=x&body=y"), "premium");
    id = c.snapshot()[0].id;
    c.set_candidate_kind(id, "user", CandidateKind::kBolaCandidate);
    c.set_param_classes(id, {{"editid", ParamClass::kReference},
                             {"title", ParamClass::kLessImportant},
                             {"body", ParamClass::kLessImportant}});
  }
  EXPECT_TRUE(fs::exists(dir.path() / "requests.jsonl"));
  EXPECT_TRUE(fs::exists(dir.path() / "params.jsonl"));
  Corpus back("zzfuzzzz", dir.path());
  ASSERT_EQ(back.size(), 1u);
  auto r = back.snapshot()[0];
  EXPECT_EQ(r.id, id);
  EXPECT_EQ(r.role_labels, (RoleSet{"premium", "user"}));
  EXPECT_EQ(r.candidate_kind("user"), CandidateKind::kBolaCandidate);
  EXPECT_EQ(r.param_class("editid"), ParamClass::kReference);
  EXPECT_EQ(r.referer(), "http://h/m.php");
  EXPECT_EQ(back.param("editid")->param_class, ParamClass::kReference);
  EXPECT_EQ(back.reference_value_pool(ValueKind::kNumeric), (std::vector<std::string>{"3", "4"}));
  EXPECT_EQ(to_json(r), to_json(back.find(id).value()));
}

TEST(Corpus, MissingDirectoryIsEmpty) {
  test::TempDir dir("corpus-empty");
  Corpus c("zzfuzzzz", dir.path() / "nothing-yet");
  EXPECT_EQ(c.size(), 0u);
}

TEST(Corpus, CorruptFileIsPersistenceError) {
  test::TempDir dir("corpus-bad");
  write_file(dir.path() / "requests.jsonl", "{not json\n");
  try {
    Corpus c("zzfuzzzz", dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPersistence);
  }
}

TEST(CorpusProperty, ReplayIsIdempotentAndMonotone) {
  std::mt19937 gen(5);
  std::vector<std::string> paths = {"/a.php", "/b.php", "/admin/c.php"};
  std::vector<std::string> names = {"id", "q", "page", "title"};
  std::vector<std::string> roles = {"admin", "user", "guest"};
  for (int round = 0; round < 20; ++round) {
    std::vector<std::pair<RequestRecord, std::string>> traffic;
    for (int i = 0; i < 30; ++i) {
      std::string url = "http://h" + paths[gen() % paths.size()] + "?" + names[gen() % names.size()] + "=" +
                        std::to_string(gen() % 5);
      std::string body;
      if (gen() % 2) body = names[gen() % names.size()] + "=v" + std::to_string(gen() % 3) + "zzfuzzzz";
      traffic.push_back({rec(body.empty() ? Method::kGet : Method::kPost, url, body), roles[gen() % roles.size()]});
    }
    test::TempDir dir("replay");
    Corpus c("zzfuzzzz", dir.path());
    std::size_t last_size = 0;
    std::map<std::string, RoleSet> labels;
    for (const auto& [r, role] : traffic) {
      c.store_request(r, role);
      ASSERT_GE(c.size(), last_size);
      last_size = c.size();
      for (const auto& s : c.snapshot()) {
        for (const auto& l : labels[s.id]) EXPECT_TRUE(s.role_labels.count(l));
        labels[s.id] = s.role_labels;
        EXPECT_FALSE(s.role_labels.empty());
        for (const auto& p : s.all_params()) EXPECT_TRUE(c.param(p.name)) << p.name;
      }
    }
    auto requests = read_file(dir.path() / "requests.jsonl");
    auto params = read_file(dir.path() / "params.jsonl");
    for (const auto& [r, role] : traffic) EXPECT_EQ(c.store_request(r, role), StoreOutcome::kDuplicate);
    EXPECT_EQ(read_file(dir.path() / "requests.jsonl"), requests);
    EXPECT_EQ(read_file(dir.path() / "params.jsonl"), params);

    std::set<std::string> keys;
    for (const auto& s : c.snapshot()) EXPECT_TRUE(keys.insert(uniqueness_key(s)).second);
  }
}

TEST(CorpusProperty, PoolsRespectValueKind) {
  Corpus c("zzfuzzzz");
  std::mt19937 gen(9);
  for (int i = 0; i < 60; ++i) {
    std::string v = gen() % 2 ? std::to_string(gen() % 1000) : "t" + std::to_string(gen() % 1000);
    if (gen() % 5 == 0) v = "9abc";
    c.store_request(rec(Method::kGet, "http://h/x" + std::to_string(i % 4) + ".php?ref=" + v), gen() % 2 ? "a" : "b");
  }
  for (const auto& r : c.snapshot()) c.set_param_classes(r.id, {{"ref", ParamClass::kReference}});
  for (auto role : {std::optional<std::string>{}, std::optional<std::string>{"a"}}) {
    if (auto num = c.reference_value_pool(ValueKind::kNumeric, role))
      for (const auto& v : *num) EXPECT_TRUE(starts_with_digit(v)) << v;
    if (auto text = c.reference_value_pool(ValueKind::kText, role))
      for (const auto& v : *text) EXPECT_FALSE(starts_with_digit(v)) << v;
  }
  EXPECT_EQ(value_kind("9abc"), ValueKind::kNumeric);
  EXPECT_EQ(value_kind("abc9"), ValueKind::kText);
  EXPECT_EQ(value_kind(""), ValueKind::kText);
}

TEST(CorpusConcurrency, ParallelWritersKeepKeysUnique) {
  Corpus c("zzfuzzzz");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&c, t] {
      for (int i = 0; i < 200; ++i)
        c.store_request(rec(Method::kGet, "http://h/p" + std::to_string(i % 25) + ".php?id=" + std::to_string(i)),
                        "role" + std::to_string(t));
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(c.size(), 25u);
  for (const auto& r : c.snapshot()) EXPECT_EQ(r.role_labels.size(), 4u);
}

// --- role analysis ------------------------------------------------------------------

TEST(RoleAnalysis, SelectTarget) {
  EXPECT_EQ(select_target({{"admin", 3}, {"staff", 2}, {"anonymous", 0}}), "admin");
  EXPECT_EQ(select_target({{"anonymous", 0}, {"member", 1}}), "member");
  for (auto bad : {std::vector<RoleRank>{{"admin", 3}, {"editor", 3}}, std::vector<RoleRank>{{"admin", 3}},
                   std::vector<RoleRank>{}}) {
    try {
      select_target(bad);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  }
  auto checkers = checker_roles({{"admin", 3}, {"staff", 2}, {"anonymous", 0}}, "admin");
  ASSERT_EQ(checkers.size(), 2u);
  EXPECT_EQ(checkers[0].name, "staff");
}

TEST(RoleAnalysis, ClassifyExamples) {
  std::map<std::string, int> ranks = {{"admin", 2}, {"user", 1}, {"anonymous", 0}};
  auto r = rec(Method::kGet, "http://h/add_item.php");
  r.role_labels = {"admin"};
  EXPECT_EQ(classify_candidate(r, "user", ranks), CandidateKind::kBflaCandidate);
  r.role_labels = {"admin", "user"};
  EXPECT_EQ(classify_candidate(r, "user", ranks), CandidateKind::kBolaCandidate);
  r.role_labels = {"user"};
  EXPECT_EQ(classify_candidate(r, "user", ranks), CandidateKind::kBolaCandidate);
  r.role_labels = {"anonymous"};
  EXPECT_EQ(classify_candidate(r, "user", ranks), CandidateKind::kBolaCandidate);
}

TEST(RoleAnalysis, MarkCandidatesWritesBackPerRole) {
  Corpus c("zzfuzzzz");
  c.store_request(rec(Method::kGet, "http://h/admin.php"), "admin");
  c.store_request(rec(Method::kGet, "http://h/shared.php"), "admin");
  c.store_request(rec(Method::kGet, "http://h/shared.php"), "staff");
  c.store_request(rec(Method::kGet, "http://h/own.php"), "user");
  std::map<std::string, int> ranks = {{"admin", 3}, {"staff", 2}, {"user", 1}};
  auto staff = mark_candidates(c, "staff", ranks);
  auto user = mark_candidates(c, "user", ranks);
  EXPECT_EQ(staff.bfla.size(), 1u);
  EXPECT_EQ(staff.bola.size(), 2u);
  EXPECT_EQ(user.bfla.size(), 2u);
  EXPECT_EQ(user.bola.size(), 1u);
  for (const auto& r : c.snapshot()) {
    EXPECT_NE(r.candidate_kind("staff"), CandidateKind::kUnset);
    EXPECT_NE(r.candidate_kind("user"), CandidateKind::kUnset);
  }
}

TEST(RoleAnalysisProperty, PartitionTotalDisjointAndRankMonotone) {
  std::mt19937 gen(13);
  std::vector<std::string> roles = {"r0", "r1", "r2", "r3"};
  for (int round = 0; round < 100; ++round) {
    Corpus c("zzfuzzzz");
    std::map<std::string, int> ranks;
    for (std::size_t i = 0; i < roles.size(); ++i) ranks[roles[i]] = static_cast<int>(gen() % 5);
    for (int i = 0; i < 12; ++i)
      for (const auto& role : roles)
        if (gen() % 2) c.store_request(rec(Method::kGet, "http://h/p" + std::to_string(i) + ".php"), role);
    for (const auto& checker : roles) {
      auto part = mark_candidates(c, checker, ranks);
      EXPECT_EQ(part.bfla.size() + part.bola.size(), c.size());
      for (const auto& id : part.bfla) EXPECT_FALSE(part.bola.count(id));
      for (const auto& r : c.snapshot()) {
        bool higher = false;
        for (const auto& l : r.role_labels) higher |= ranks[l] > ranks[checker];
        bool bfla = !r.role_labels.count(checker) && higher;
        EXPECT_EQ(part.bfla.count(r.id) == 1, bfla);
      }
      // Raising the checker's rank never turns a BFLA candidate into a BOLA one
      // while some label holder still outranks it.
      auto raised = ranks;
      raised[checker] += 1;
      for (const auto& r : c.snapshot()) {
        if (!part.bfla.count(r.id)) continue;
        bool still_higher = false;
        for (const auto& l : r.role_labels) still_higher |= raised[l] > raised[checker];
        if (still_higher) EXPECT_EQ(classify_candidate(r, checker, raised), CandidateKind::kBflaCandidate);
      }
    }
  }
}
