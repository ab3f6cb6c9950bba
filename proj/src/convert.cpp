#include "transweather/convert.hpp"

#include "transweather/error.hpp"

namespace tw {

template <typename Real>
Tensor<Real> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractError("images_to_tensor: empty batch");
  const Image& first = *images.front();
  std::vector<Real> data;
  data.reserve(images.size() * first.size());
  for (const Image* img : images) {
    if (!img->same_dims(first)) throw DimensionError("images_to_tensor: batch images differ in size");
    for (float v : img->data) data.push_back(static_cast<Real>(2.0 * v - 1.0));
  }
  return Tensor<Real>(Shape{images.size(), first.channels, first.height, first.width}, std::move(data));
}

template <typename Real>
Image tensor_to_image(const Tensor<Real>& tensor, std::size_t index) {
  if (tensor.rank() != 4 || index >= tensor.dim(0)) {
    throw DimensionError("tensor_to_image: need [B,C,H,W] with index < B, got " + shape_str(tensor.shape()));
  }
  Image img(tensor.dim(1), tensor.dim(2), tensor.dim(3));
  const auto src = tensor.data().subspan(index * img.size(), img.size());
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>((static_cast<double>(src[i]) + 1.0) / 2.0);
  return img;
}

template Tensor<float> images_to_tensor(const std::vector<const Image*>&);
template Tensor<double> images_to_tensor(const std::vector<const Image*>&);
template Image tensor_to_image(const Tensor<float>&, std::size_t);
template Image tensor_to_image(const Tensor<double>&, std::size_t);

}  // namespace tw
