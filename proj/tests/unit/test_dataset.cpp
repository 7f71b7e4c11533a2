#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "cfrec/dataset.hpp"
#include "cfrec/error.hpp"
#include "cfrec/random.hpp"

using namespace cfrec;

namespace {

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

InteractionMatrix from_dense(const std::vector<std::vector<int>>& x) {
  std::vector<std::vector<Entry>> rows(x.size());
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < x.size(); ++u) {
    users.push_back("u" + std::to_string(u));
    for (std::size_t l = 0; l < x[u].size(); ++l) {
      if (x[u][l]) rows[u].push_back({static_cast<int>(l), 1.0});
    }
  }
  for (std::size_t l = 0; l < x[0].size(); ++l) items.push_back("i" + std::to_string(l));
  return InteractionMatrix(rows, static_cast<int>(x[0].size()), ValueDomain::binary(), users, items);
}

// one pass of each rule, repeated by the caller
InteractionMatrix single_pass(const InteractionMatrix& m, int mu, int mi) {
  std::vector<int> keep_users;
  for (int u = 0; u < m.n_users(); ++u) {
    if (static_cast<int>(m.row(u).size()) >= mu) keep_users.push_back(u);
  }
  const InteractionMatrix a = select_users(m, keep_users);
  const auto counts = a.item_counts();
  std::vector<int> remap(a.n_items(), -1);
  std::vector<std::string> items;
  for (int i = 0; i < a.n_items(); ++i) {
    if (counts[i] >= mi) {
      remap[i] = static_cast<int>(items.size());
      items.push_back(a.item_ids()[i]);
    }
  }
  std::vector<std::vector<Entry>> rows;
  for (int u = 0; u < a.n_users(); ++u) {
    std::vector<Entry> r;
    for (const Entry& e : a.row(u)) {
      if (remap[e.item] >= 0) r.push_back({remap[e.item], e.value});
    }
    rows.push_back(r);
  }
  return InteractionMatrix(rows, static_cast<int>(items.size()), a.domain(), a.user_ids(), items);
}

}  // namespace

TEST_CASE("load small rating file") {
  const InteractionMatrix m = parse_interactions("user_id,item_id,rating\nu1,i1,5\nu1,i2,3\nu2,i1,4\n");
  CHECK(m.n_users() == 2);
  CHECK(m.n_items() == 2);
  CHECK(m.nnz() == 3);
  CHECK(m.value(0, 0) == 5);
  CHECK(m.domain().kind == ValueDomain::Kind::Raw);
}

TEST_CASE("duplicates keep the maximum") {
  const auto m = parse_interactions("user_id,item_id,rating\nu1,i1,5\nu1,i2,3\nu2,i1,4\nu1,i1,2\n");
  CHECK(m.nnz() == 3);
  CHECK(m.value(0, 0) == 5);
}

TEST_CASE("malformed rows name their line") {
  CHECK(error_of([] { parse_interactions("user_id,item_id,rating\nu1,,5\n"); }).find("line 1") !=
        std::string::npos);
  CHECK(error_of([] { parse_interactions("user_id,item_id,rating\nu1,i1,5\nu2,i2,x\n"); })
            .find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse_interactions(""), Error);
  CHECK_THROWS_AS(parse_interactions("user_id,item_id,rating\n"), Error);
  CHECK_THROWS_AS(parse_interactions("user_id,item_id,rating\nu1,i1,0\n"), Error);
  CHECK_THROWS_AS(load_interactions("/no/such/file.csv"), Error);
}

TEST_CASE("missing value column means implicit ones") {
  CsvSchema s;
  s.value_column = "";
  const auto m = parse_interactions("user_id,item_id\na,x\nb,y\n", s);
  CHECK(m.domain().is_binary());
  CHECK(m.value(1, 1) == 1.0);
}

TEST_CASE("quoted fields and custom schema") {
  CsvSchema s{"who", "what", "stars"};
  const auto m = parse_interactions("what,stars,who\n\"i,1\",2,\"u 1\"\n", s);
  CHECK(m.item_ids()[0] == "i,1");
  CHECK(m.user_ids()[0] == "u 1");
}

TEST_CASE("rating normalization") {
  const auto raw = parse_interactions("user_id,item_id,rating\nu1,i1,5\nu1,i2,1\nu2,i1,4\n");
  const auto n = normalize_ratings(raw, 5);
  CHECK(n.value(0, 0) == 1.0);
  CHECK(n.value(0, 1) == doctest::Approx(0.2));
  CHECK(n.nnz() == raw.nnz());
  CHECK(n.domain().kind == ValueDomain::Kind::RatingLevels);
  for (const auto& row : n.rows()) {
    for (const Entry& e : row) CHECK(n.domain().contains(e.value));
  }
  CHECK_THROWS_AS(normalize_ratings(parse_interactions("user_id,item_id,rating\nu,i,6\n"), 5), Error);
  CHECK_THROWS_AS(normalize_ratings(parse_interactions("user_id,item_id,rating\nu,i,2.5\n"), 5), Error);
}

TEST_CASE("binarize") {
  std::vector<std::vector<Entry>> rows{{{0, 0.4}, {1, 1.0}}};
  const InteractionMatrix m(rows, 2, ValueDomain::rating_levels(5), {"u"}, {"a", "b"});
  const auto b = binarize(m);
  CHECK(b.value(0, 0) == 1.0);
  CHECK(b.value(0, 1) == 1.0);
  CHECK(b.domain().is_binary());
  CHECK(binarize(b) == b);
  const InteractionMatrix empty({}, 0, ValueDomain::binary(), {}, {});
  CHECK(binarize(empty) == empty);
}

TEST_CASE("constructor rejects values outside the domain") {
  std::vector<std::vector<Entry>> rows{{{0, 0.5}}};
  CHECK_THROWS_AS(InteractionMatrix(rows, 1, ValueDomain::binary(), {"u"}, {"a"}), Error);
  std::vector<std::vector<Entry>> zero{{{0, 0.0}}};
  CHECK_THROWS_AS(InteractionMatrix(zero, 1, ValueDomain::raw(), {"u"}, {"a"}), Error);
}

TEST_CASE("prune removes sparse users") {
  const auto m = from_dense({{1, 1, 1, 1, 1}, {1, 0, 0, 0, 0}, {1, 1, 1, 1, 1}});
  const auto p = prune(m, 2, 0);
  CHECK(p.n_users() == 2);
  CHECK(prune(m, 0, 0) == m);
}

TEST_CASE("prune reaches the same fixed point as repeated single passes") {
  // dropping u4 leaves i4 with one user, dropping i4 leaves u3 with one item
  const auto m = from_dense({{1, 1, 1, 0, 0},
                             {1, 1, 0, 0, 0},
                             {1, 0, 1, 0, 0},
                             {0, 0, 1, 1, 0},
                             {0, 0, 0, 1, 0}});
  InteractionMatrix ref = m;
  while (true) {
    InteractionMatrix next = single_pass(ref, 2, 2);
    if (next == ref) break;
    ref = next;
  }
  const auto p = prune(m, 2, 2);
  CHECK(p == ref);
  CHECK(p.n_users() == 3);
  CHECK(prune(p, 2, 2) == p);
}

TEST_CASE("prune is idempotent on random data") {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::vector<int>> x(30, std::vector<int>(20));
    for (auto& r : x) {
      for (int& v : r) v = rng.uniform() < 0.2;
    }
    x[0][0] = 1;
    const auto m = from_dense(x);
    InteractionMatrix p;
    try {
      p = prune(m, 3, 3);
    } catch (const Error&) {
      continue;
    }
    CHECK(prune(p, 3, 3) == p);
  }
}

TEST_CASE("pruning everything is an error") {
  const auto m = from_dense({{1, 0}, {0, 1}});
  CHECK(error_of([&] { prune(m, 5, 5); }).find("pruning removed all data") != std::string::npos);
}

TEST_CASE("category maps") {
  const auto m = from_dense({{1, 1, 1, 1, 1}});
  const auto years = parse_item_meta("item_id,year\ni0,1999\ni1,1999\ni2,2003\ni3,2003\n", m);
  const CategoryMap by_year = build_category_map(years, CategoryStrategy::ByYear);
  // i4 has no metadata
  REQUIRE(by_year.n_categories() == 3);
  CHECK(by_year.members[0] == std::vector<int>{0, 1});
  CHECK(by_year.members[1] == std::vector<int>{2, 3});
  CHECK(by_year.labels[2] == kUncategorized);
  CHECK(by_year.members[2] == std::vector<int>{4});
  std::size_t total = 0;
  for (const auto& k : by_year.members) total += k.size();
  CHECK(total == 5);

  const auto tags = parse_item_meta("item_id,tags\ni0,a;b\ni1,a\ni2,b\ni3,c\ni4,c\n", m);
  const CategoryMap ts = build_category_map(tags, CategoryStrategy::TagSets);
  REQUIRE(ts.n_categories() == 3);
  CHECK(ts.members[0] == std::vector<int>{0, 1});
  CHECK(ts.members[1] == std::vector<int>{0, 2});

  CHECK_THROWS_AS(build_category_map(years, CategoryStrategy::TagSets), Error);
  CHECK_THROWS_AS(parse_category_strategy("bogus"), Error);
  CHECK(parse_category_strategy(to_string(CategoryStrategy::ByYear)) == CategoryStrategy::ByYear);
  CHECK(single_category_map(3).members[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("fold splits") {
  std::vector<std::vector<int>> x(6, std::vector<int>{1, 1});
  const auto m = from_dense(x);
  const FoldSplit a = split_folds(m, 3, 42);
  for (int f = 0; f < 3; ++f) CHECK(a.users_in(f).size() == 2);
  CHECK(a.users_not_in(0).size() == 4);
  CHECK(split_folds(m, 3, 42).assignment == a.assignment);
  CHECK_THROWS_AS(split_folds(m, 7, 1), Error);
  CHECK_THROWS_AS(split_folds(m, 1, 1), Error);
  std::vector<std::vector<int>> y(7, std::vector<int>{1, 1});
  const FoldSplit b = split_folds(from_dense(y), 3, 5);
  std::vector<std::size_t> sizes;
  for (int f = 0; f < 3; ++f) sizes.push_back(b.users_in(f).size());
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
}

TEST_CASE("id maps sidecar") {
  const auto m = from_dense({{1, 0}, {0, 1}});
  const auto path = std::filesystem::temp_directory_path() / "cfrec_ids.json";
  write_id_maps(m, path.string());
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("\"u1\"") != std::string::npos);
  std::filesystem::remove(path);
}
