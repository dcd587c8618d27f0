#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "acfuzz/oracle.hpp"
#include "acfuzz/sql_lexer.hpp"
#include "acfuzz/util.hpp"
#include "support.hpp"

using namespace acfuzz;

namespace {

const char* kUsersUpdate =
    "UPDATE users set  firstname = 'ibdjweyxfoz'  ,  middlename = 'wnmnozap'  ,  lastname = 'swkgxicagowetfbp'  ,  "
    "username = 'tzqwyaloxx'  ,  password = 'c82a88d7c5f180798b0d118d23893a94'  where id = 1711440657";
const char* kCartDelete = "DELETE FROM oc_cart WHERE (api_id > 0 OR customer_id = 1)";
const char* kModuleUpdate = "UPDATE ps_module SET active = 0 WHERE id_module = 64";

RequestRecord users_save_record() {
  auto r = make_record(Method::kPost, "http://lab.test/lms/classes/Users.php?f=save",
                       {{"Referer", "http://lab.test/lms/admin/?page=user"}},
                       "id=1711440657&firstname=ibdjweyxfoz&middlename=wnmnozap&lastname=swkgxicagowetfbp"
                       "&username=tzqwyaloxx&password=hunter22");
  r.param_classes = {{"f", ParamClass::kLessImportant},         {"id", ParamClass::kReference},
                     {"firstname", ParamClass::kLessImportant}, {"middlename", ParamClass::kLessImportant},
                     {"lastname", ParamClass::kLessImportant},  {"username", ParamClass::kLessImportant},
                     {"password", ParamClass::kLessImportant}};
  return r;
}

MutationPlan plan_of(RequestRecord r, TestKind kind, std::vector<Substitution> subs = {}) {
  MutationPlan p;
  p.base_record = std::move(r);
  p.test_kind = kind;
  p.substitutions = std::move(subs);
  return p;
}

Substitution sub(const std::string& name, const std::string& from, const std::string& to, bool in_query = false,
                 ValueSource source = ValueSource::kPool) {
  Substitution s;
  s.param = name;
  s.old_value = from;
  s.new_value = to;
  s.in_query = in_query;
  s.source = source;
  return s;
}

Visibility hidden() { return Visibility{}; }

Visibility shown() {
  Visibility v;
  v.request_visible = true;
  return v;
}

Finding finding(const std::string& url, const std::string& query, const std::string& role = "member",
                FindingStatus status = FindingStatus::kValid) {
  Finding f;
  f.kind = FindingKind::kBola;
  f.method = "GET";
  f.url = url;
  auto lexed = lex_sql(query);
  f.query = query;
  f.verb = lexed.verb;
  f.table = lexed.table;
  f.role = role;
  f.status = status;
  return f;
}

}  // namespace

// --- lexer fixtures ---------------------------------------------------------

TEST(SqlLexer, UsersUpdateFromLabApp) {
  auto q = lex_sql(kUsersUpdate);
  EXPECT_EQ(q.verb, SqlVerb::kUpdate);
  EXPECT_EQ(q.table, "users");
  EXPECT_EQ(q.all_literals, (std::vector<std::string>{"ibdjweyxfoz", "wnmnozap", "swkgxicagowetfbp", "tzqwyaloxx",
                                                       "c82a88d7c5f180798b0d118d23893a94", "1711440657"}));
  EXPECT_EQ(q.where_literals, std::vector<std::string>{"1711440657"});
  EXPECT_TRUE(q.is_dml());
}

TEST(SqlLexer, CartDeleteWithParenthesisedWhere) {
  auto q = lex_sql(kCartDelete);
  EXPECT_EQ(q.verb, SqlVerb::kDelete);
  EXPECT_EQ(q.table, "oc_cart");
  EXPECT_EQ(q.where_literals, (std::vector<std::string>{"0", "1"}));
  EXPECT_EQ(q.all_literals, (std::vector<std::string>{"0", "1"}));
}

TEST(SqlLexer, ModuleUpdateKeepsSetLiteralOutOfWhere) {
  auto q = lex_sql(kModuleUpdate);
  EXPECT_EQ(q.verb, SqlVerb::kUpdate);
  EXPECT_EQ(q.table, "ps_module");
  EXPECT_EQ(q.all_literals, (std::vector<std::string>{"0", "64"}));
  EXPECT_EQ(q.where_literals, std::vector<std::string>{"64"});
}

TEST(SqlLexer, InsertSelectAndQuoting) {
  auto ins = lex_sql("insert into `wp_posts` (a, b) values (\"it\\\"s\", 'o''k', -3, 2.5)");
  EXPECT_EQ(ins.verb, SqlVerb::kInsert);
  EXPECT_EQ(ins.table, "wp_posts");
  // A minus after a separator is part of the literal; after an operand it is subtraction.
  EXPECT_EQ(ins.all_literals, (std::vector<std::string>{"it\"s", "o'k", "-3", "2.5"}));
  EXPECT_TRUE(ins.where_literals.empty());
  EXPECT_EQ(lex_sql("UPDATE t SET n = n-3 WHERE id = -7").all_literals, (std::vector<std::string>{"3", "-7"}));

  auto sel = lex_sql("SELECT * FROM db.notes n WHERE n.id = 4 AND owner IN (SELECT id FROM u WHERE x = 9)");
  EXPECT_EQ(sel.verb, SqlVerb::kSelect);
  EXPECT_EQ(sel.table, "notes");
  EXPECT_FALSE(sel.is_dml());
  EXPECT_EQ(sel.where_literals, (std::vector<std::string>{"4", "9"}));
}

TEST(SqlLexer, NestedWhereIsNotTopLevel) {
  auto q = lex_sql("DELETE FROM t WHERE id IN (SELECT x FROM y WHERE z = 5) AND k = 'a'");
  EXPECT_EQ(q.where_literals, (std::vector<std::string>{"5", "a"}));
  auto inner_only = lex_sql("UPDATE t SET v = (SELECT 1 FROM y WHERE z = 5)");
  EXPECT_TRUE(inner_only.where_literals.empty());
  EXPECT_EQ(inner_only.all_literals, (std::vector<std::string>{"1", "5"}));
}

TEST(SqlLexer, UnlexableIsOtherWithoutLiterals) {
  for (const char* bad : {"UPDATE users SET a = 'open", "", "   ", "\"", "DELETE FROM x WHERE a = \"b"}) {
    auto q = lex_sql(bad);
    EXPECT_EQ(q.verb, SqlVerb::kOther) << bad;
    EXPECT_TRUE(q.all_literals.empty()) << bad;
    EXPECT_TRUE(q.where_literals.empty()) << bad;
  }
  EXPECT_EQ(lex_sql("SHOW TABLES").verb, SqlVerb::kOther);
}

TEST(SqlLexer, PlaceholdersContributeNothing) {
  auto q = lex_sql("UPDATE users SET name = ? WHERE id = ?");
  EXPECT_EQ(q.verb, SqlVerb::kUpdate);
  EXPECT_TRUE(q.all_literals.empty());
}

TEST(SqlLexer, CaseInsensitiveKeywordsAndIdentifiersWithDigits) {
  auto q = lex_sql("dElEtE fRoM smf_user_alerts wHeRe id_alert = 12 and id_member2 = 3");
  EXPECT_EQ(q.verb, SqlVerb::kDelete);
  EXPECT_EQ(q.table, "smf_user_alerts");
  EXPECT_EQ(q.where_literals, (std::vector<std::string>{"12", "3"}));
}

// --- rules ------------------------------------------------------------------

TEST(Rule1, MatchesAnyClauseWhenRequestHidden) {
  auto plan = plan_of(users_save_record(), TestKind::kFunctionLevel);
  auto m = rule1_bfla(plan, lex_all({kUsersUpdate}), hidden());
  ASSERT_TRUE(m);
  EXPECT_EQ(m->query.table, "users");
  EXPECT_EQ(m->matched_values, (std::vector<std::string>{"ibdjweyxfoz", "wnmnozap", "swkgxicagowetfbp",
                                                         "tzqwyaloxx", "1711440657"}));
}

TEST(Rule1, VisibleRequestNeverMatches) {
  auto plan = plan_of(users_save_record(), TestKind::kFunctionLevel);
  EXPECT_FALSE(rule1_bfla(plan, lex_all({kUsersUpdate}), shown()));
}

TEST(Rule1, DeleteUserFixture) {
  auto r = make_record(Method::kGet, "http://emp.test/admin/delete-user.php?id=7", {}, "");
  r.param_classes = {{"id", ParamClass::kReference}};
  auto plan = plan_of(r, TestKind::kFunctionLevel);
  auto m = rule1_bfla(plan, lex_all({"DELETE FROM users WHERE id = 7"}), hidden());
  ASSERT_TRUE(m);
  EXPECT_EQ(m->matched_values, std::vector<std::string>{"7"});
  EXPECT_FALSE(rule1_bfla(plan, lex_all({"DELETE FROM users WHERE id = 7"}), shown()));
  EXPECT_FALSE(rule1_bfla(plan, lex_all({"SELECT * FROM users WHERE id = 7"}), hidden()));
}

TEST(Rule1, ModuleIdTranslationIsMissed) {
  auto r = make_record(Method::kPost, "http://shop.test/admin/index.php?controller=AdminModules", {},
                       "module_name=statsbestcustomers");
  auto plan = plan_of(r, TestKind::kFunctionLevel);
  EXPECT_FALSE(rule1_bfla(plan, lex_all({kModuleUpdate}), hidden()));
  auto ol = plan_of(r, TestKind::kObjectLevel, {sub("module_name", "statsbestcustomers", "statsforum")});
  EXPECT_FALSE(rule2_bola(ol, lex_all({kModuleUpdate}), {}, {}));
}

TEST(Rule2, SubstitutedWhereValueForeignToRole) {
  auto plan = plan_of(users_save_record(), TestKind::kObjectLevel, {sub("id", "1711440001", "1711440657")});
  auto m = rule2_bola(plan, lex_all({kUsersUpdate}), {}, {"1711440001"});
  ASSERT_TRUE(m);
  EXPECT_EQ(m->matched_values, std::vector<std::string>{"1711440657"});
  EXPECT_EQ(m->query.verb, SqlVerb::kUpdate);
}

TEST(Rule2, ValueOnRefererPageOrInRoleCorpusIsLegitimate) {
  auto plan = plan_of(users_save_record(), TestKind::kObjectLevel, {sub("id", "1", "1711440657")});
  EXPECT_FALSE(rule2_bola(plan, lex_all({kUsersUpdate}), {"1711440657"}, {}));
  EXPECT_FALSE(rule2_bola(plan, lex_all({kUsersUpdate}), {}, {"1711440657"}));
}

TEST(Rule2, SetClauseOnlyAndSelectsDoNotMatch) {
  auto plan = plan_of(users_save_record(), TestKind::kObjectLevel, {sub("firstname", "ibdjweyxfoz", "qqqq")});
  EXPECT_FALSE(rule2_bola(plan, lex_all({"UPDATE users SET firstname = 'qqqq' WHERE id = 3"}), {}, {}));
  auto byid = plan_of(users_save_record(), TestKind::kObjectLevel, {sub("id", "1", "3")});
  EXPECT_FALSE(rule2_bola(byid, lex_all({"SELECT * FROM users WHERE id = 3"}), {}, {}));
  EXPECT_TRUE(rule2_bola(byid, lex_all({"SELECT * FROM users WHERE id = 3", "DELETE FROM users WHERE id = 3"}),
                         {}, {}));
}

TEST(Rule2, AccountSwapsAreNotSubstitutedValues) {
  auto r = make_record(Method::kGet, "http://f.test/index.php?aid=5&token=abc", {}, "");
  auto plan = plan_of(r, TestKind::kObjectLevel,
                      {sub("token", "abc", "def", true, ValueSource::kAccountUnique), sub("aid", "5", "6", true)});
  EXPECT_EQ(plan.substituted_values(), (std::set<std::string>{"6"}));
  EXPECT_FALSE(rule2_bola(plan, lex_all({"DELETE FROM t WHERE token = 'def'"}), {}, {}));
}

TEST(Rule2, CoincidentalCartDelete) {
  auto r = make_record(Method::kGet, "http://oc.test/cart.php?route=0", {}, "");
  auto first = plan_of(r, TestKind::kObjectLevel, {sub("route", "0", "1", true)});
  auto m = rule2_bola(first, lex_all({kCartDelete}), {}, {"0"});
  ASSERT_TRUE(m);
  EXPECT_EQ(m->matched_values, std::vector<std::string>{"1"});
  auto zero = plan_of(r, TestKind::kObjectLevel, {sub("route", "1", "0", true)});
  EXPECT_TRUE(rule2_bola(zero, lex_all({kCartDelete}), {}, {}));
  auto recheck = plan_of(r, TestKind::kObjectLevel, {sub("route", "0", "2", true)});
  EXPECT_FALSE(rule2_bola(recheck, lex_all({kCartDelete}), {}, {}));
}

TEST(Rules, ExactEqualityOnly) {
  auto r = make_record(Method::kGet, "http://x.test/a.php?id=7", {}, "");
  auto fl = plan_of(r, TestKind::kFunctionLevel);
  EXPECT_FALSE(rule1_bfla(fl, lex_all({"DELETE FROM t WHERE id = 07"}), hidden()));
  EXPECT_FALSE(rule1_bfla(fl, lex_all({"DELETE FROM t WHERE id = 17"}), hidden()));
  auto ol = plan_of(r, TestKind::kObjectLevel, {sub("id", "7", "8", true)});
  EXPECT_FALSE(rule2_bola(ol, lex_all({"DELETE FROM t WHERE id = '88'"}), {}, {}));
}

// --- filter_ignored ------------------------------------------------------------

TEST(FilterIgnored, Examples) {
  auto qs = lex_all({"INSERT INTO smf_log (id) VALUES (5)", "UPDATE smf_user_alerts SET is_read = 1 WHERE id = 5",
                     "SELECT 1"});
  auto kept = filter_ignored(qs, {"smf_log"});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].table, "smf_user_alerts");
  EXPECT_EQ(filter_ignored(qs, {}).size(), 3u);
  EXPECT_EQ(filter_ignored(qs, {"SMF_LOG"}).size(), 2u);

  auto r = make_record(Method::kGet, "http://f.test/index.php?action=admin&id=5", {}, "");
  auto plan = plan_of(r, TestKind::kFunctionLevel);
  EXPECT_FALSE(rule1_bfla(plan, filter_ignored(lex_all({"INSERT INTO smf_log (id) VALUES (5)"}), {"smf_log"}),
                          hidden()));
}

TEST(FilterIgnored, IdempotentOnRandomBatches) {
  std::mt19937 gen(42);
  std::vector<std::string> tables = {"a", "B", "smf_log", "ps_connections", "users"};
  for (int round = 0; round < 200; ++round) {
    std::vector<std::string> raw;
    int n = static_cast<int>(gen() % 8);
    for (int i = 0; i < n; ++i) raw.push_back("DELETE FROM " + tables[gen() % tables.size()] + " WHERE id = 1");
    std::set<std::string> ignored;
    for (const auto& t : tables)
      if (gen() % 2) ignored.insert(t);
    auto once = filter_ignored(lex_all(raw), ignored);
    auto twice = filter_ignored(once, ignored);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].raw, twice[i].raw);
  }
}

// --- lexer properties -----------------------------------------------------------

TEST(SqlLexerProperty, WhereLiteralsAreASubsequenceOfAllLiterals) {
  std::mt19937 gen(7);
  std::vector<std::string> pieces = {"UPDATE", "DELETE", "FROM", "INSERT", "INTO", "SELECT", "t1", "users", "SET",
                                     "WHERE",  "where",  "(",    ")",      "=",    ",",      "'x'", "\"y\"", "12",
                                     "0",      "AND",    "OR",   "'a\\'b'", "v",   "IN",     "-4",  "3.5"};
  for (int round = 0; round < 2000; ++round) {
    std::string sql;
    int n = 1 + static_cast<int>(gen() % 14);
    for (int i = 0; i < n; ++i) sql += pieces[gen() % pieces.size()] + " ";
    auto q = lex_sql(sql);
    EXPECT_EQ(q.is_dml(), q.verb == SqlVerb::kInsert || q.verb == SqlVerb::kUpdate || q.verb == SqlVerb::kDelete);
    // where_literals is a suffix-ordered subsequence of all_literals.
    std::size_t j = 0;
    for (const auto& lit : q.all_literals)
      if (j < q.where_literals.size() && q.where_literals[j] == lit) ++j;
    EXPECT_EQ(j, q.where_literals.size()) << sql;
    // Every piece is balanced, so a trailing open quote makes the input unlexable.
    auto open = lex_sql(sql + "'open");
    EXPECT_EQ(open.verb, SqlVerb::kOther) << sql;
    EXPECT_TRUE(open.all_literals.empty() && open.where_literals.empty()) << sql;
  }
}

TEST(RuleProperty, NoMatchWithoutDml) {
  std::mt19937 gen(11);
  auto r = make_record(Method::kGet, "http://x.test/a.php?id=7&v=abc", {}, "");
  for (int round = 0; round < 300; ++round) {
    std::string v = std::to_string(gen() % 20);
    auto q = lex_all({"SELECT * FROM t WHERE id = " + v + " AND v = 'abc'"});
    auto ol = plan_of(r, TestKind::kObjectLevel, {sub("id", "7", v, true)});
    EXPECT_FALSE(rule1_bfla(plan_of(r, TestKind::kFunctionLevel), q, hidden()));
    EXPECT_FALSE(rule2_bola(ol, q, {}, {}));
  }
}

// --- visibility -----------------------------------------------------------------

TEST(Visibility, DashboardWithoutDeleteLink) {
  auto r = make_record(Method::kGet, "http://emp.test/admin/delete-user.php?id=3",
                       {{"Referer", "http://emp.test/dashboard.php"}}, "");
  r.param_classes = {{"id", ParamClass::kReference}};
  auto plan = plan_of(r, TestKind::kFunctionLevel);
  std::string page = "<h1>Employee</h1><a href=\"/leave.php\">Leave</a><a href=\"/profile.php?id=4\">Me</a>";
  auto v = visibility_from_page(plan, parse_url("http://emp.test/dashboard.php"), page, "zzfuzzzz");
  EXPECT_FALSE(v.request_visible);
  EXPECT_EQ(v.page_refs, (std::set<std::string>{"4"}));
  EXPECT_FALSE(v.low_confidence);

  std::string admin = page + "<a href=\"admin/delete-user.php?id=9\">Delete</a>";
  EXPECT_TRUE(visibility_from_page(plan, parse_url("http://emp.test/dashboard.php"), admin, "zzfuzzzz")
                  .request_visible);
}

TEST(Visibility, NotesPageRefs) {
  auto r = make_record(Method::kPost, "http://notes.test/user/edit-notes.php?editid=3",
                       {{"Referer", "http://notes.test/user/manage-notes.php"}}, "title=x&body=y");
  r.param_classes = {{"editid", ParamClass::kReference},
                     {"title", ParamClass::kLessImportant},
                     {"body", ParamClass::kLessImportant}};
  auto plan = plan_of(r, TestKind::kObjectLevel, {sub("editid", "3", "1", true)});
  std::string page =
      "<a href=\"edit-notes.php?editid=3\">Edit</a><a href=\"edit-notes.php?editid=4\">Edit</a>"
      "<a href=\"manage-notes.php?delid=3\">Delete</a>";
  auto v = visibility_from_page(plan, parse_url("http://notes.test/user/manage-notes.php"), page, "zzfuzzzz");
  EXPECT_EQ(v.page_refs, (std::set<std::string>{"3", "4"}));
}

TEST(Visibility, ExactFormActionIsVisible) {
  auto r = make_record(Method::kPost, "http://lab.test/classes/Users.php?f=save",
                       {{"Referer", "http://lab.test/admin/user.php"}}, "id=5&firstname=azzfuzzzz");
  r.param_classes = {{"f", ParamClass::kLessImportant},
                     {"id", ParamClass::kReference},
                     {"firstname", ParamClass::kLessImportant}};
  auto plan = plan_of(r, TestKind::kFunctionLevel);
  auto page_url = parse_url("http://lab.test/admin/user.php");
  std::string form =
      "<form method=\"post\" action=\"../classes/Users.php?f=save\"><input type=hidden name=id value=5>"
      "<input name=firstname></form>";
  EXPECT_TRUE(visibility_from_page(plan, page_url, form, "zzfuzzzz").request_visible);
  std::string other_action =
      "<form method=\"post\" action=\"../classes/Users.php?f=delete\"><input type=hidden name=id value=5></form>";
  EXPECT_FALSE(visibility_from_page(plan, page_url, other_action, "zzfuzzzz").request_visible);
  std::string get_form = "<form action=\"../classes/Users.php?f=save\"></form>";
  EXPECT_FALSE(visibility_from_page(plan, page_url, get_form, "zzfuzzzz").request_visible);
}

TEST(Visibility, HiddenActionFieldsMustAgree) {
  auto r = make_record(Method::kPost, "http://f.test/index.php", {{"Referer", "http://f.test/index.php?a=1"}},
                       "do=remove&aid=2");
  r.param_classes = {{"do", ParamClass::kLessImportant}, {"aid", ParamClass::kReference}};
  auto plan = plan_of(r, TestKind::kObjectLevel);
  auto page_url = parse_url("http://f.test/index.php?a=1");
  EXPECT_FALSE(visibility_from_page(plan, page_url,
                                    "<form method=post><input type=hidden name=do value=read>"
                                    "<input type=hidden name=aid value=2></form>",
                                    "zzfuzzzz")
                   .request_visible);
  auto v = visibility_from_page(plan, page_url,
                                "<form method=post><input type=hidden name=do value=remove>"
                                "<select name=aid><option value=2>a</option><option value=8>b</option></select>"
                                "</form>",
                                "zzfuzzzz");
  EXPECT_TRUE(v.request_visible);
  EXPECT_EQ(v.page_refs, (std::set<std::string>{"2", "8"}));
}

// --- sidecar ----------------------------------------------------------------------

TEST(Sidecar, BitExactShapeAndRoundTrip) {
  QuerySidecar s;
  s.covid = "6f1c2a4e-0b7d-4f5e-9a3c-1d2e3f4a5b6c";
  s.queries = {kCartDelete};
  s.coverage = {{"cart.php", {3, 5, 8}}};
  auto expected = nlohmann::json::parse(
      R"json({"covid": "6f1c2a4e-0b7d-4f5e-9a3c-1d2e3f4a5b6c",
          "queries": ["DELETE FROM oc_cart WHERE (api_id > 0 OR customer_id = 1)"],
          "coverage": [{"file": "cart.php", "lines": [3, 5, 8]}]})json");
  EXPECT_EQ(to_json(s), expected);
  auto back = parse_sidecar(nlohmann::json::parse(to_json(s).dump()));
  EXPECT_EQ(back.covid, s.covid);
  EXPECT_EQ(back.queries, s.queries);
  ASSERT_EQ(back.coverage.size(), 1u);
  EXPECT_EQ(back.coverage[0].lines, (std::vector<int>{3, 5, 8}));
  auto j = to_json(s);
  EXPECT_EQ(j.size(), 3u);
  EXPECT_TRUE(j.at("covid").is_string());
  EXPECT_TRUE(j.at("queries").is_array());
  EXPECT_TRUE(j.at("coverage")[0].at("lines").is_array());
}

TEST(Sidecar, FileNameMustMatchCovid) {
  test::TempDir dir("sidecar");
  QuerySidecar s;
  s.covid = "aaaa-1";
  s.queries = {"SELECT 1"};
  auto good = sidecar_path(dir.path(), "aaaa-1");
  EXPECT_EQ(good.filename(), "aaaa-1.json");
  write_file(good, to_json(s).dump());
  EXPECT_EQ(read_sidecar(good).queries, s.queries);
  auto bad = sidecar_path(dir.path(), "bbbb-2");
  write_file(bad, to_json(s).dump());
  try {
    read_sidecar(bad);
    FAIL() << "expected a schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
}

TEST(Sidecar, MalformedDocumentsAreSchemaErrors) {
  for (const char* doc : {"[]", "{\"covid\": 3, \"queries\": [], \"coverage\": []}",
                          "{\"covid\": \"a\", \"queries\": [1], \"coverage\": []}",
                          "{\"covid\": \"a\", \"queries\": [], \"coverage\": [{\"file\": \"x\"}]}"}) {
    try {
      parse_sidecar(nlohmann::json::parse(doc));
      ADD_FAILURE() << doc;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSchema) << doc;
    }
  }
}

// --- dedup ------------------------------------------------------------------------

TEST(Dedup, AlertPairIsTwoCases) {
  std::vector<Finding> fs = {
      finding("http://smf.test/index.php?action=profile&area=alerts_popup&aid=3&do=remove",
              "DELETE FROM smf_user_alerts WHERE id_alert IN (3) AND id_member = 2"),
      finding("http://smf.test/index.php?action=profile&area=alerts_popup&aid=3&do=read",
              "UPDATE smf_user_alerts SET is_read = 1 WHERE id_alert IN (3)"),
  };
  auto out = dedup_findings(fs);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].dedup_key().verb, "DELETE");
  EXPECT_EQ(out[1].dedup_key().verb, "UPDATE");
  EXPECT_EQ(out[0].dedup_key().path, "/index.php");
  EXPECT_EQ(out[0].dedup_key().table, "smf_user_alerts");
}

TEST(Dedup, SameKeyDifferentValuesIsOne) {
  auto a = finding("http://x.test/del.php?del=5", "DELETE FROM students WHERE id = 5");
  auto b = finding("http://x.test/del.php?del=9", "DELETE FROM students WHERE id = 9");
  auto c = finding("http://x.test/del.php?del=9", "DELETE FROM STUDENTS WHERE id = 9");
  EXPECT_EQ(dedup_findings({a, b, c}).size(), 1u);
  EXPECT_TRUE(dedup_findings({}).empty());
}

TEST(Dedup, ValidRepresentativeWins) {
  auto retracted = finding("http://x.test/del.php?del=5", "DELETE FROM students WHERE id = 5", "a",
                           FindingStatus::kRetracted);
  auto valid =
      finding("http://x.test/del.php?del=9", "DELETE FROM students WHERE id = 9", "z", FindingStatus::kValid);
  EXPECT_EQ(dedup_findings({retracted, valid})[0].status, FindingStatus::kValid);
  EXPECT_EQ(dedup_findings({valid, retracted})[0].status, FindingStatus::kValid);
}

TEST(DedupProperty, FixedPointAndOrderIndependent) {
  std::mt19937 gen(3);
  std::vector<std::string> paths = {"/a.php", "/b.php", "/index.php"};
  std::vector<std::string> queries = {"DELETE FROM t WHERE id = 1", "UPDATE t SET a = 2 WHERE id = 1",
                                      "DELETE FROM u WHERE id = 3", "INSERT INTO t (a) VALUES (4)"};
  for (int round = 0; round < 200; ++round) {
    std::vector<Finding> fs;
    int n = static_cast<int>(gen() % 10);
    for (int i = 0; i < n; ++i) {
      auto f = finding("http://x.test" + paths[gen() % paths.size()] + "?v=" + std::to_string(gen() % 5),
                       queries[gen() % queries.size()], gen() % 2 ? "r1" : "r2",
                       static_cast<FindingStatus>(gen() % 3));
      f.confirmation_count = static_cast<int>(gen() % 11);
      fs.push_back(f);
    }
    auto once = dedup_findings(fs);
    auto twice = dedup_findings(once);
    ASSERT_EQ(once.size(), twice.size());
    std::set<DedupKey> keys;
    for (const auto& f : fs) keys.insert(f.dedup_key());
    EXPECT_EQ(once.size(), keys.size());
    auto shuffled = fs;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    auto other = dedup_findings(shuffled);
    for (std::size_t i = 0; i < once.size(); ++i) {
      EXPECT_EQ(to_json(once[i]), to_json(twice[i]));
      EXPECT_EQ(to_json(once[i]), to_json(other[i]));
    }
  }
}

TEST(Finding, JsonRoundTrip) {
  auto f = finding("http://x.test/del.php?del=5", "DELETE FROM students WHERE id = 5");
  f.matched_values = {"5"};
  f.confirmation_count = 10;
  f.low_confidence = true;
  f.body = "a=1";
  auto back = finding_from_json(to_json(f));
  EXPECT_EQ(to_json(back), to_json(f));
  auto j = to_json(f);
  EXPECT_EQ(j["dedup_key"], nlohmann::json::array({"GET", "/del.php", "DELETE", "students"}));
}
