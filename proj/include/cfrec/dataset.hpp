#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cfrec {

/// Admissible values of a stored interaction. `Raw` is the state straight
/// out of a CSV before normalization or binarization.
struct ValueDomain {
  enum class Kind { Binary, RatingLevels, Raw };

  Kind kind = Kind::Binary;
  std::vector<double> levels;  // ascending, only for RatingLevels

  static ValueDomain binary() { return {Kind::Binary, {}}; }
  static ValueDomain raw() { return {Kind::Raw, {}}; }
  static ValueDomain rating_levels(int scale_max);

  bool is_binary() const { return kind == Kind::Binary; }
  bool contains(double v) const;
};

struct Entry {
  int item = 0;
  double value = 0.0;
};

/// Sparse N x D user-item matrix, stored as per-user rows sorted by item.
/// Absent entries mean "no interaction" (value 0); stored values are > 0.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;

  /// Takes ownership of rows; sorts them, validates indices, values and
  /// the domain. Throws Error(Data) on violations.
  InteractionMatrix(std::vector<std::vector<Entry>> rows, int n_items,
                    ValueDomain domain, std::vector<std::string> user_ids,
                    std::vector<std::string> item_ids);

  int n_users() const { return static_cast<int>(rows_.size()); }
  int n_items() const { return n_items_; }
  std::size_t nnz() const;

  std::span<const Entry> row(int user) const { return rows_.at(user); }
  const std::vector<std::vector<Entry>>& rows() const { return rows_; }
  double value(int user, int item) const;
  std::vector<double> dense_row(int user) const;

  const ValueDomain& domain() const { return domain_; }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  std::optional<int> find_user(const std::string& id) const;
  std::optional<int> find_item(const std::string& id) const;

  std::vector<int> item_counts() const;

  bool operator==(const InteractionMatrix&) const = default;

 private:
  std::vector<std::vector<Entry>> rows_;
  int n_items_ = 0;
  ValueDomain domain_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
};

inline bool operator==(const Entry& a, const Entry& b) {
  return a.item == b.item && a.value == b.value;
}
inline bool operator==(const ValueDomain& a, const ValueDomain& b) {
  return a.kind == b.kind && a.levels == b.levels;
}

struct CsvSchema {
  std::string user_column = "user_id";
  std::string item_column = "item_id";
  /// Empty, or absent from the header, means every row is an implicit 1.
  std::string value_column = "rating";
};

InteractionMatrix load_interactions(const std::string& path,
                                    const CsvSchema& schema = {});
/// Same as load_interactions but from in-memory CSV text.
InteractionMatrix parse_interactions(const std::string& csv_text,
                                     const CsvSchema& schema = {});

InteractionMatrix normalize_ratings(const InteractionMatrix& m, int scale_max);
InteractionMatrix binarize(const InteractionMatrix& m);
InteractionMatrix prune(const InteractionMatrix& m, int min_user_interactions,
                        int min_item_interactions);

/// Per-item attributes keyed by matrix item index.
struct ItemMeta {
  std::optional<std::string> category;
  std::vector<std::string> tags;
  std::optional<int> year;
};

struct ItemMetaTable {
  std::vector<ItemMeta> items;  // indexed like the matrix items
  bool has_category_column = false;
  bool has_tags_column = false;
  bool has_year_column = false;
};

/// Reads item_id,category,tags,year (any subset beyond item_id). Items of
/// the matrix missing from the file get empty metadata; unknown ids are
/// ignored.
ItemMetaTable load_item_meta(const std::string& path,
                             const InteractionMatrix& m);
ItemMetaTable parse_item_meta(const std::string& csv_text,
                              const InteractionMatrix& m);

enum class CategoryStrategy { SingleCategory, TagSets, ByYear };

CategoryStrategy parse_category_strategy(const std::string& name);
std::string to_string(CategoryStrategy s);

struct CategoryMap {
  std::vector<std::vector<int>> members;  // sorted item indices per category
  std::vector<std::string> labels;

  int n_categories() const { return static_cast<int>(members.size()); }
};

inline constexpr const char* kUncategorized = "uncategorized";

CategoryMap build_category_map(const ItemMetaTable& meta,
                               CategoryStrategy strategy);
/// Every item in one category.
CategoryMap single_category_map(int n_items);

struct FoldSplit {
  int fold_count = 0;
  std::vector<int> assignment;  // user -> fold
  std::uint64_t seed = 0;

  std::vector<int> users_in(int fold) const;
  std::vector<int> users_not_in(int fold) const;
};

FoldSplit split_folds(const InteractionMatrix& m, int fold_count,
                      std::uint64_t seed);

/// Restricts the matrix to the given users (in the given order).
InteractionMatrix select_users(const InteractionMatrix& m,
                               std::span<const int> users);

/// Writes {"users": [...], "items": [...]} index->id maps.
void write_id_maps(const InteractionMatrix& m, const std::string& path);

}  // namespace cfrec
