#include "cfrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "cfrec/error.hpp"
#include "cfrec/random.hpp"
#include "csv.hpp"

namespace cfrec {

ValueDomain ValueDomain::rating_levels(int scale_max) {
  ValueDomain d{Kind::RatingLevels, {}};
  for (int v = 1; v <= scale_max; ++v) {
    d.levels.push_back(static_cast<double>(v) / scale_max);
  }
  return d;
}

bool ValueDomain::contains(double v) const {
  switch (kind) {
    case Kind::Binary:
      return v == 1.0;
    case Kind::RatingLevels:
      return std::find(levels.begin(), levels.end(), v) != levels.end();
    case Kind::Raw:
      return v > 0.0 && std::isfinite(v);
  }
  return false;
}

InteractionMatrix::InteractionMatrix(std::vector<std::vector<Entry>> rows,
                                     int n_items, ValueDomain domain,
                                     std::vector<std::string> user_ids,
                                     std::vector<std::string> item_ids)
    : rows_(std::move(rows)),
      n_items_(n_items),
      domain_(std::move(domain)),
      user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)) {
  if (n_items_ < 0) fail(ErrorKind::Data, "negative item count");
  if (user_ids_.empty()) {
    for (int u = 0; u < n_users(); ++u) user_ids_.push_back(std::to_string(u));
  }
  if (item_ids_.empty()) {
    for (int i = 0; i < n_items_; ++i) item_ids_.push_back(std::to_string(i));
  }
  if (static_cast<int>(user_ids_.size()) != n_users() ||
      static_cast<int>(item_ids_.size()) != n_items_) {
    fail(ErrorKind::Data, "id map size does not match matrix shape");
  }
  for (auto& row : rows_) {
    std::sort(row.begin(), row.end(),
              [](const Entry& a, const Entry& b) { return a.item < b.item; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      const Entry& e = row[k];
      if (e.item < 0 || e.item >= n_items_) {
        fail(ErrorKind::Data, "item index out of range");
      }
      if (k > 0 && row[k - 1].item == e.item) {
        fail(ErrorKind::Data, "duplicate entry in row");
      }
      if (!(e.value > 0.0) || !domain_.contains(e.value)) {
        fail(ErrorKind::Data,
             "stored value " + std::to_string(e.value) + " outside domain");
      }
    }
  }
}

std::size_t InteractionMatrix::nnz() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

double InteractionMatrix::value(int user, int item) const {
  const auto& row = rows_.at(user);
  auto it = std::lower_bound(
      row.begin(), row.end(), item,
      [](const Entry& e, int i) { return e.item < i; });
  return (it != row.end() && it->item == item) ? it->value : 0.0;
}

std::vector<double> InteractionMatrix::dense_row(int user) const {
  std::vector<double> x(n_items_, 0.0);
  for (const Entry& e : rows_.at(user)) x[e.item] = e.value;
  return x;
}

std::optional<int> InteractionMatrix::find_user(const std::string& id) const {
  auto it = std::find(user_ids_.begin(), user_ids_.end(), id);
  if (it == user_ids_.end()) return std::nullopt;
  return static_cast<int>(it - user_ids_.begin());
}

std::optional<int> InteractionMatrix::find_item(const std::string& id) const {
  auto it = std::find(item_ids_.begin(), item_ids_.end(), id);
  if (it == item_ids_.end()) return std::nullopt;
  return static_cast<int>(it - item_ids_.begin());
}

std::vector<int> InteractionMatrix::item_counts() const {
  std::vector<int> counts(n_items_, 0);
  for (const auto& row : rows_) {
    for (const Entry& e : row) ++counts[e.item];
  }
  return counts;
}

namespace {

int column_index(const std::vector<std::string>& header,
                 const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

InteractionMatrix parse_interactions(const std::string& csv_text,
                                     const CsvSchema& schema) {
  const auto lines = csv::split_lines(csv_text);
  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first >= lines.size()) fail(ErrorKind::Data, "empty interaction file");

  const auto header = csv::split_record(lines[first]);
  const int user_col = column_index(header, schema.user_column);
  const int item_col = column_index(header, schema.item_column);
  const int value_col = schema.value_column.empty()
                            ? -1
                            : column_index(header, schema.value_column);
  if (user_col < 0 || item_col < 0) {
    fail(ErrorKind::Data, "header lacks '" + schema.user_column + "' or '" +
                              schema.item_column + "' column");
  }

  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::unordered_map<int, double>> cells;

  int data_line = 0;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    ++data_line;
    const auto fields = csv::split_record(lines[li]);
    const auto where = "line " + std::to_string(data_line);
    const int needed = std::max({user_col, item_col, value_col});
    if (static_cast<int>(fields.size()) <= needed) {
      fail(ErrorKind::Data, "malformed row at " + where + ": too few fields");
    }
    const std::string& user = fields[user_col];
    const std::string& item = fields[item_col];
    if (user.empty()) fail(ErrorKind::Data, "malformed row at " + where + ": empty user id");
    if (item.empty()) fail(ErrorKind::Data, "malformed row at " + where + ": empty item id");
    double value = 1.0;
    if (value_col >= 0) {
      if (!parse_double(fields[value_col], value) || !std::isfinite(value)) {
        fail(ErrorKind::Data, "malformed row at " + where + ": bad value '" +
                                  fields[value_col] + "'");
      }
      if (value <= 0.0) {
        fail(ErrorKind::Data, "malformed row at " + where +
                                  ": non-positive value (0 means no interaction)");
      }
    }
    auto [uit, unew] = user_index.try_emplace(user, static_cast<int>(user_ids.size()));
    if (unew) {
      user_ids.push_back(user);
      cells.emplace_back();
    }
    auto [iit, inew] = item_index.try_emplace(item, static_cast<int>(item_ids.size()));
    if (inew) item_ids.push_back(item);
    auto [cit, cnew] = cells[uit->second].try_emplace(iit->second, value);
    if (!cnew) cit->second = std::max(cit->second, value);
  }
  if (data_line == 0) fail(ErrorKind::Data, "interaction file has no rows");

  std::vector<std::vector<Entry>> rows(cells.size());
  for (std::size_t u = 0; u < cells.size(); ++u) {
    for (const auto& [item, value] : cells[u]) rows[u].push_back({item, value});
  }
  const int n_items = static_cast<int>(item_ids.size());
  return InteractionMatrix(std::move(rows), n_items,
                           value_col >= 0 ? ValueDomain::raw() : ValueDomain::binary(),
                           std::move(user_ids), std::move(item_ids));
}

InteractionMatrix load_interactions(const std::string& path,
                                    const CsvSchema& schema) {
  return parse_interactions(csv::read_file(path), schema);
}

InteractionMatrix normalize_ratings(const InteractionMatrix& m, int scale_max) {
  if (scale_max < 1) fail(ErrorKind::InvalidArgument, "rating scale must be >= 1");
  const ValueDomain levels = ValueDomain::rating_levels(scale_max);
  std::vector<std::vector<Entry>> rows = m.rows();
  for (auto& row : rows) {
    for (Entry& e : row) {
      const double r = std::round(e.value);
      if (r != e.value || r < 1 || r > scale_max) {
        fail(ErrorKind::Data, "rating " + std::to_string(e.value) +
                                  " not in {1.." + std::to_string(scale_max) + "}");
      }
      e.value = levels.levels[static_cast<int>(r) - 1];
    }
  }
  return InteractionMatrix(std::move(rows), m.n_items(), levels, m.user_ids(),
                           m.item_ids());
}

InteractionMatrix binarize(const InteractionMatrix& m) {
  std::vector<std::vector<Entry>> rows = m.rows();
  for (auto& row : rows) {
    for (Entry& e : row) e.value = 1.0;
  }
  return InteractionMatrix(std::move(rows), m.n_items(), ValueDomain::binary(),
                           m.user_ids(), m.item_ids());
}

InteractionMatrix prune(const InteractionMatrix& m, int min_user_interactions,
                        int min_item_interactions) {
  if (min_user_interactions < 0 || min_item_interactions < 0) {
    fail(ErrorKind::InvalidArgument, "pruning thresholds must be >= 0");
  }
  std::vector<char> user_alive(m.n_users(), 1);
  std::vector<char> item_alive(m.n_items(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> item_count(m.n_items(), 0);
    for (int u = 0; u < m.n_users(); ++u) {
      if (!user_alive[u]) continue;
      int count = 0;
      for (const Entry& e : m.row(u)) {
        if (item_alive[e.item]) ++count;
      }
      if (count < min_user_interactions) {
        user_alive[u] = 0;
        changed = true;
        continue;
      }
      for (const Entry& e : m.row(u)) {
        if (item_alive[e.item]) ++item_count[e.item];
      }
    }
    if (changed) continue;  // recount items against the surviving users
    for (int i = 0; i < m.n_items(); ++i) {
      if (item_alive[i] && item_count[i] < min_item_interactions) {
        item_alive[i] = 0;
        changed = true;
      }
    }
  }

  std::vector<int> new_item(m.n_items(), -1);
  std::vector<std::string> item_ids;
  for (int i = 0; i < m.n_items(); ++i) {
    if (item_alive[i]) {
      new_item[i] = static_cast<int>(item_ids.size());
      item_ids.push_back(m.item_ids()[i]);
    }
  }
  std::vector<std::vector<Entry>> rows;
  std::vector<std::string> user_ids;
  for (int u = 0; u < m.n_users(); ++u) {
    if (!user_alive[u]) continue;
    std::vector<Entry> row;
    for (const Entry& e : m.row(u)) {
      if (item_alive[e.item]) row.push_back({new_item[e.item], e.value});
    }
    rows.push_back(std::move(row));
    user_ids.push_back(m.user_ids()[u]);
  }
  if (rows.empty() || item_ids.empty()) {
    fail(ErrorKind::Data, "pruning removed all data");
  }
  const int n_items = static_cast<int>(item_ids.size());
  return InteractionMatrix(std::move(rows), n_items, m.domain(),
                           std::move(user_ids), std::move(item_ids));
}

ItemMetaTable parse_item_meta(const std::string& csv_text,
                              const InteractionMatrix& m) {
  const auto lines = csv::split_lines(csv_text);
  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first >= lines.size()) fail(ErrorKind::Data, "empty item metadata file");
  const auto header = csv::split_record(lines[first]);
  const int id_col = column_index(header, "item_id");
  if (id_col < 0) fail(ErrorKind::Data, "item metadata lacks 'item_id' column");
  const int cat_col = column_index(header, "category");
  const int tags_col = column_index(header, "tags");
  const int year_col = column_index(header, "year");

  ItemMetaTable table;
  table.items.resize(m.n_items());
  table.has_category_column = cat_col >= 0;
  table.has_tags_column = tags_col >= 0;
  table.has_year_column = year_col >= 0;

  std::unordered_map<std::string, int> index;
  for (int i = 0; i < m.n_items(); ++i) index.emplace(m.item_ids()[i], i);

  int data_line = 0;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    ++data_line;
    const auto fields = csv::split_record(lines[li]);
    auto field = [&](int col) -> std::string {
      return (col >= 0 && col < static_cast<int>(fields.size())) ? fields[col] : "";
    };
    auto it = index.find(field(id_col));
    if (it == index.end()) continue;
    ItemMeta& meta = table.items[it->second];
    if (auto c = field(cat_col); !c.empty()) meta.category = c;
    if (auto t = field(tags_col); !t.empty()) {
      std::size_t start = 0;
      while (start <= t.size()) {
        std::size_t end = t.find(';', start);
        if (end == std::string::npos) end = t.size();
        std::string tag = t.substr(start, end - start);
        if (!tag.empty()) meta.tags.push_back(tag);
        start = end + 1;
      }
    }
    if (auto y = field(year_col); !y.empty()) {
      int year = 0;
      auto [ptr, ec] = std::from_chars(y.data(), y.data() + y.size(), year);
      if (ec != std::errc() || ptr != y.data() + y.size()) {
        fail(ErrorKind::Data, "bad year '" + y + "' at metadata line " +
                                  std::to_string(data_line));
      }
      meta.year = year;
    }
  }
  return table;
}

ItemMetaTable load_item_meta(const std::string& path, const InteractionMatrix& m) {
  return parse_item_meta(csv::read_file(path), m);
}

CategoryStrategy parse_category_strategy(const std::string& name) {
  if (name == "single_category") return CategoryStrategy::SingleCategory;
  if (name == "tag_sets") return CategoryStrategy::TagSets;
  if (name == "by_year") return CategoryStrategy::ByYear;
  fail(ErrorKind::Config, "unknown category strategy '" + name + "'");
}

std::string to_string(CategoryStrategy s) {
  switch (s) {
    case CategoryStrategy::SingleCategory: return "single_category";
    case CategoryStrategy::TagSets: return "tag_sets";
    case CategoryStrategy::ByYear: return "by_year";
  }
  return "?";
}

CategoryMap build_category_map(const ItemMetaTable& meta,
                               CategoryStrategy strategy) {
  const int n_items = static_cast<int>(meta.items.size());
  std::map<std::string, std::vector<int>> by_label;
  std::map<int, std::vector<int>> by_year;
  std::vector<int> uncategorized;

  switch (strategy) {
    case CategoryStrategy::SingleCategory:
      if (!meta.has_category_column) {
        fail(ErrorKind::Config, "item metadata has no 'category' column");
      }
      for (int i = 0; i < n_items; ++i) {
        if (meta.items[i].category) {
          by_label[*meta.items[i].category].push_back(i);
        } else {
          uncategorized.push_back(i);
        }
      }
      break;
    case CategoryStrategy::TagSets:
      if (!meta.has_tags_column) {
        fail(ErrorKind::Config, "item metadata has no 'tags' column");
      }
      for (int i = 0; i < n_items; ++i) {
        if (meta.items[i].tags.empty()) uncategorized.push_back(i);
        for (const auto& tag : meta.items[i].tags) {
          auto& members = by_label[tag];
          if (members.empty() || members.back() != i) members.push_back(i);
        }
      }
      break;
    case CategoryStrategy::ByYear:
      if (!meta.has_year_column) {
        fail(ErrorKind::Config, "item metadata has no 'year' column");
      }
      for (int i = 0; i < n_items; ++i) {
        if (meta.items[i].year) {
          by_year[*meta.items[i].year].push_back(i);
        } else {
          uncategorized.push_back(i);
        }
      }
      break;
  }

  CategoryMap cmap;
  for (auto& [label, members] : by_label) {
    cmap.labels.push_back(label);
    cmap.members.push_back(std::move(members));
  }
  for (auto& [year, members] : by_year) {
    cmap.labels.push_back(std::to_string(year));
    cmap.members.push_back(std::move(members));
  }
  if (!uncategorized.empty()) {
    cmap.labels.emplace_back(kUncategorized);
    cmap.members.push_back(std::move(uncategorized));
  }
  return cmap;
}

CategoryMap single_category_map(int n_items) {
  CategoryMap cmap;
  cmap.labels.emplace_back("all");
  cmap.members.emplace_back(n_items);
  std::iota(cmap.members[0].begin(), cmap.members[0].end(), 0);
  return cmap;
}

std::vector<int> FoldSplit::users_in(int fold) const {
  std::vector<int> users;
  for (std::size_t u = 0; u < assignment.size(); ++u) {
    if (assignment[u] == fold) users.push_back(static_cast<int>(u));
  }
  return users;
}

std::vector<int> FoldSplit::users_not_in(int fold) const {
  std::vector<int> users;
  for (std::size_t u = 0; u < assignment.size(); ++u) {
    if (assignment[u] != fold) users.push_back(static_cast<int>(u));
  }
  return users;
}

FoldSplit split_folds(const InteractionMatrix& m, int fold_count,
                      std::uint64_t seed) {
  if (fold_count < 2) fail(ErrorKind::InvalidArgument, "fold_count must be >= 2");
  if (fold_count > m.n_users()) {
    fail(ErrorKind::InvalidArgument, "fold_count " + std::to_string(fold_count) +
                                         " exceeds user count " +
                                         std::to_string(m.n_users()));
  }
  std::vector<int> order(m.n_users());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(order));
  FoldSplit split;
  split.fold_count = fold_count;
  split.seed = seed;
  split.assignment.assign(m.n_users(), 0);
  for (std::size_t p = 0; p < order.size(); ++p) {
    split.assignment[order[p]] = static_cast<int>(p % fold_count);
  }
  return split;
}

InteractionMatrix select_users(const InteractionMatrix& m,
                               std::span<const int> users) {
  std::vector<std::vector<Entry>> rows;
  std::vector<std::string> ids;
  for (int u : users) {
    auto r = m.row(u);
    rows.emplace_back(r.begin(), r.end());
    ids.push_back(m.user_ids()[u]);
  }
  return InteractionMatrix(std::move(rows), m.n_items(), m.domain(),
                           std::move(ids), m.item_ids());
}

void write_id_maps(const InteractionMatrix& m, const std::string& path) {
  nlohmann::json j;
  j["users"] = m.user_ids();
  j["items"] = m.item_ids();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

}  // namespace cfrec
